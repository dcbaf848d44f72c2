from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from ohmic_cli.errors import ParseError, UsageError
from ohmic_cli.flow import Flow
from ohmic_cli.network import Network, NodeSet


def ensure_unique_path(path: Path) -> Path:
    if not path.exists():
        return path
    stem = path.stem
    suffix = path.suffix
    parent = path.parent
    for i in range(1, 10_000):
        candidate = parent / f"{stem} ({i}){suffix}"
        if not candidate.exists():
            return candidate
    raise UsageError(f"Unable to find unique filename for: {path}")


def parse_select_spec(spec: str) -> list[int]:
    """
    Parse e.g. "1,3,5" or "1-4,9" to unique integers in ascending order.
    """
    raw = (spec or "").strip()
    if not raw:
        return []
    out: set[int] = set()
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                cut = part.index("-", 1)
                a = int(part[:cut].strip())
                b = int(part[cut + 1 :].strip())
                out.update(range(min(a, b), max(a, b) + 1))
            else:
                out.add(int(part))
        except ValueError as e:
            raise UsageError(f"not an integer list: {spec!r}") from e
    return sorted(out)


def parse_float_list(spec: str) -> list[float]:
    """Parse "2,3,4.5" preserving order and duplicates."""
    out: list[float] = []
    for part in (spec or "").split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(float(part))
        except ValueError as e:
            raise UsageError(f"not a number: {part!r}") from e
    return out


def parse_set_option(spec: str) -> tuple[str, list[str]]:
    """
    Parse "A=0,1" into ("A", ["0", "1"]). Labels are kept as strings and
    resolved against the network later.
    """
    name, sep, rest = (spec or "").partition("=")
    name = name.strip()
    if not sep or not name:
        raise UsageError(f"expected NAME=label,label,... got {spec!r}")
    labels = [s.strip() for s in rest.split(",") if s.strip()]
    return name, labels


def resolve_sets(net: Network, specs: list[str]) -> dict[str, NodeSet]:
    """Resolve repeated --set options against the network's labels."""
    out: dict[str, NodeSet] = {}
    for spec in specs:
        name, labels = parse_set_option(spec)
        if name in out:
            raise UsageError(f"set {name} given twice")
        out[name] = net.node_set(labels)
    return out


def _data_lines(path: Path) -> list[tuple[int, list[str]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    out: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((lineno, line.split()))
    return out


def _number(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError as e:
        raise ParseError(f"line {lineno}: {token!r} is not a number", line=lineno) from e


def load_potential(net: Network, path: Path) -> NDArray[np.float64]:
    """Read `label value` lines; every node must be given exactly once."""
    f = np.full(net.n, np.nan)
    for lineno, parts in _data_lines(path):
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'label value'", line=lineno)
        x = net.index(parts[0])
        if not np.isnan(f[x]):
            raise ParseError(f"line {lineno}: node {parts[0]} given twice", line=lineno)
        f[x] = _number(parts[1], lineno)
    missing = np.flatnonzero(np.isnan(f))
    if missing.size:
        raise ParseError(f"potential file misses nodes {[net.label(int(x)) for x in missing[:10]]}")
    return f


def load_flow(net: Network, path: Path) -> Flow:
    """Read `x y value` lines as the flow x -> y (antisymmetry is implied)."""
    xs: list[int] = []
    ys: list[int] = []
    vals: list[float] = []
    for lineno, parts in _data_lines(path):
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 'x y value'", line=lineno)
        xs.append(net.index(parts[0]))
        ys.append(net.index(parts[1]))
        vals.append(_number(parts[2], lineno))
    return Flow.from_directed(net.n, xs, ys, vals)
