from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Mapping, Sequence

from rich.console import Console
from rich.table import Table

from ohmic_cli.errors import DomainError
from ohmic_cli.models import LatticeRow, RunConfig, plain
from ohmic_cli.util import ensure_unique_path

SCHEMA_VERSION = 1
LATTICE_COLUMNS = ("d", "n", "capacity", "upper_bound", "lower_bound", "wall_time_ms")


def _check_finite(value: Any, where: str = "result") -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise DomainError(f"non-finite value in report at {where}")
    if isinstance(value, dict):
        for k, v in value.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _check_finite(v, f"{where}[{i}]")


def report(command: str, config: RunConfig, result: Any) -> dict[str, Any]:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config.to_dict(),
        "result": plain(result),
    }
    _check_finite(payload["result"])
    return payload


def to_json(payload: Mapping[str, Any]) -> str:
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(payload, ensure_ascii=False, indent=2, allow_nan=False)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, float) else str(value)


def lattice_csv(rows: Sequence[LatticeRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LATTICE_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, col)) for col in LATTICE_COLUMNS])
    return buf.getvalue()


def _short(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, list) and len(value) > 8:
        return f"[{len(value)} values]"
    if isinstance(value, dict) and len(value) > 8:
        return f"{{{len(value)} entries}}"
    return str(value)


def print_key_values(title: str, data: Mapping[str, Any], *, console: Console | None = None) -> None:
    table = Table(title=title)
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for key, value in data.items():
        table.add_row(str(key), _short(value))
    (console or Console()).print(table)


def print_rows(title: str, rows: Sequence[Mapping[str, Any]], *, console: Console | None = None) -> None:
    table = Table(title=title)
    if not rows:
        (console or Console()).print(table)
        return
    columns = list(rows[0].keys())
    for col in columns:
        table.add_column(col, justify="right")
    for row in rows:
        table.add_row(*[_short(row.get(col)) for col in columns])
    (console or Console()).print(table)


def write_output(text: str, out: Path | None, *, overwrite: bool = False) -> Path | None:
    """Write to `out` (never clobbering unless asked), or return None for stdout."""
    if out is None:
        return None
    path = out if overwrite else ensure_unique_path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    return path
