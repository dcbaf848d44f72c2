from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from ohmic_cli.config import load_settings
from ohmic_cli.errors import BadDimension, DomainError, SizeLimit
from ohmic_cli.flow import Flow, dirichlet_energy, energy
from ohmic_cli.models import LatticeRow
from ohmic_cli.network import Network, Potential
from ohmic_cli.potential import capacity

logger = logging.getLogger(__name__)

DIMENSIONS = (1, 2, 3)
MAX_BOX_NODES = 250_000
DEFAULT_DIRECTIONS = 10_000
_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True, slots=True, eq=False)
class BoxNetwork:
    """Box [-n, n]^d of Z^d with the exterior collapsed into the last node."""

    d: int
    n: int
    network: Network
    coords: NDArray[np.int64]

    @property
    def origin(self) -> int:
        return self.index_of((0,) * self.d)

    @property
    def boundary(self) -> int:
        return self.network.n - 1

    @property
    def interior_count(self) -> int:
        return (2 * self.n + 1) ** self.d

    def index_of(self, point: Sequence[int]) -> int:
        shape = (2 * self.n + 1,) * self.d
        return int(np.ravel_multi_index(tuple(int(p) + self.n for p in point), shape))


def box_network(d: int, n: int) -> BoxNetwork:
    """
    Nodes are the (2n+1)^d lattice points plus the collapsed exterior; every
    lattice edge has conductance 1/(2d) and the exterior carries no self-loop.
    """
    if d not in DIMENSIONS:
        raise BadDimension(f"dimension must be one of {DIMENSIONS}, got {d}")
    if n < 1:
        raise DomainError(f"box half-width must be >= 1, got {n}")
    side = 2 * n + 1
    m = side**d
    if m + 1 > MAX_BOX_NODES:
        raise SizeLimit(f"box [-{n},{n}]^{d} has {m + 1} nodes, limit is {MAX_BOX_NODES}")
    shape = (side,) * d
    grid = np.arange(m).reshape(shape)
    coords = np.stack(np.unravel_index(np.arange(m), shape), axis=1).astype(np.int64) - n
    cond = 1.0 / (2 * d)
    us: list[NDArray[np.int64]] = []
    vs: list[NDArray[np.int64]] = []
    outside = np.zeros(m)
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, side - 1)
        hi[axis] = slice(1, side)
        us.append(grid[tuple(lo)].ravel())
        vs.append(grid[tuple(hi)].ravel())
        on_face = np.abs(coords[:, axis]) == n
        outside += on_face.astype(float)
    face = np.flatnonzero(outside)
    u = np.concatenate(us + [face])
    v = np.concatenate(vs + [np.full(face.size, m, dtype=np.int64)])
    c = np.concatenate([np.full(sum(len(a) for a in us), cond), outside[face] * cond])
    labels = [",".join(str(int(t)) for t in row) for row in coords] + ["boundary"]
    net = Network.from_arrays(m + 1, u, v, c, labels=labels)
    return BoxNetwork(d=d, n=n, network=net, coords=coords)


def origin_capacity(box: BoxNetwork) -> float:
    return capacity(box.network, [box.origin], [box.boundary])


def log_test_function(n: int) -> Potential:
    """f_n(x) = 1 - ln(1 + |x|_inf) / ln(1 + n) on box(2, n), zero on the exterior."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    box = box_network(2, n)
    radius = np.abs(box.coords).max(axis=1)
    f = np.zeros(box.network.n)
    f[:-1] = 1.0 - np.log1p(radius) / np.log1p(n)
    return f


def log_test_bound(n: int) -> float:
    """Closed-form upper bound 2(1 + ln(n+1)) / ln^2(n+1) on D(f_n)."""
    ln = np.log1p(n)
    return float(2.0 * (1.0 + ln) / ln**2)


def _directions(d: int, count: int) -> NDArray[np.float64]:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    k = np.arange(count, dtype=float)
    if d == 2:
        angle = 2.0 * np.pi * (k + 0.5) / count
        return np.stack([np.cos(angle), np.sin(angle)], axis=1)
    z = 1.0 - (2.0 * k + 1.0) / count
    rho = np.sqrt(1.0 - z * z)
    theta = _GOLDEN_ANGLE * k
    return np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=1)


def radial_flow(n: int, d: int = 3, *, directions: int = DEFAULT_DIRECTIONS, box: BoxNetwork | None = None) -> Flow:
    """
    Unitary flow from the origin to the exterior averaging the lattice paths
    that follow rays in evenly spread directions.

    Each path is the sequence of unit cells crossed by the ray (a voxel
    walk), so it is monotone in every coordinate and stays within distance 1
    of the ray. The final step leaves the box into the exterior node.
    """
    if d not in DIMENSIONS:
        raise BadDimension(f"dimension must be one of {DIMENSIONS}, got {d}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    box = box or box_network(d, n)
    dirs = _directions(d, directions)
    count = len(dirs)
    side = 2 * n + 1
    shape = (side,) * d
    with np.errstate(divide="ignore"):
        delta = np.where(dirs != 0, 1.0 / np.abs(dirs), np.inf)
    step = np.sign(dirs).astype(np.int64)
    t_next = 0.5 * delta
    pos = np.zeros((count, d), dtype=np.int64)
    active = np.ones(count, dtype=bool)
    src: list[NDArray[np.int64]] = []
    dst: list[NDArray[np.int64]] = []
    rows = np.arange(count)
    while active.any():
        idx = rows[active]
        axis = np.argmin(t_next[idx], axis=1)
        before = np.ravel_multi_index(tuple((pos[idx] + n).T), shape)
        pos[idx, axis] += step[idx, axis]
        t_next[idx, axis] += delta[idx, axis]
        left = np.abs(pos[idx]).max(axis=1) > n
        after = np.full(idx.size, box.boundary, dtype=np.int64)
        inside = ~left
        after[inside] = np.ravel_multi_index(tuple((pos[idx[inside]] + n).T), shape)
        src.append(before)
        dst.append(after)
        active[idx[left]] = False
    x = np.concatenate(src)
    y = np.concatenate(dst)
    return Flow.from_directed(box.network.n, x, y, np.full(x.size, 1.0 / count))


def radial_flow_energy(n: int, d: int = 3, *, directions: int = DEFAULT_DIRECTIONS) -> float:
    box = box_network(d, n)
    return energy(box.network, radial_flow(n, d, directions=directions, box=box))


def lattice_row(d: int, n: int, *, directions: int = DEFAULT_DIRECTIONS) -> LatticeRow:
    """
    One experiment row: exact capacity, the log test function bound (d=2)
    and the radial flow bound 1/D(phi).
    """
    started = time.perf_counter()
    box = box_network(d, n)
    cap = origin_capacity(box)
    upper = None
    if d == 2:
        upper = dirichlet_energy(box.network, log_test_function(n))
    lower = 1.0 / energy(box.network, radial_flow(n, d, directions=directions, box=box))
    elapsed = (time.perf_counter() - started) * 1000.0
    logger.debug("lattice d=%d n=%d capacity=%.6g in %.1f ms", d, n, cap, elapsed)
    return LatticeRow(d=d, n=n, capacity=cap, upper_bound=upper, lower_bound=lower, wall_time_ms=elapsed)


async def _gather_rows(
    fn: Callable[[int], LatticeRow],
    ns: Sequence[int],
    threads: int,
    on_done: Callable[[LatticeRow], None] | None,
) -> list[LatticeRow]:
    sem = asyncio.Semaphore(threads)

    async def _one(n: int) -> LatticeRow:
        async with sem:
            row = await asyncio.to_thread(fn, n)
        if on_done is not None:
            on_done(row)
        return row

    return list(await asyncio.gather(*[_one(n) for n in ns]))


def lattice_experiment(
    d: int,
    ns: Sequence[int],
    *,
    directions: int = DEFAULT_DIRECTIONS,
    threads: int | None = None,
    on_done: Callable[[LatticeRow], None] | None = None,
) -> list[LatticeRow]:
    """Rows for each n, computed concurrently and returned in input order."""
    if d not in DIMENSIONS:
        raise BadDimension(f"dimension must be one of {DIMENSIONS}, got {d}")
    for n in ns:
        if (2 * n + 1) ** d + 1 > MAX_BOX_NODES:
            raise SizeLimit(f"box [-{n},{n}]^{d} exceeds {MAX_BOX_NODES} nodes")
    workers = threads if threads is not None else load_settings().threads
    return asyncio.run(_gather_rows(lambda n: lattice_row(d, n, directions=directions), list(ns), workers, on_done))


def capacity_sequence(d: int, n_max: int, *, ns: Sequence[int] | None = None, threads: int | None = None) -> list[tuple[int, float]]:
    """(n, C_{0,exterior}(n)) for n = 1..n_max (or the given ns)."""
    if d not in DIMENSIONS:
        raise BadDimension(f"dimension must be one of {DIMENSIONS}, got {d}")
    chosen = list(ns) if ns is not None else list(range(1, n_max + 1))
    for n in chosen:
        if (2 * n + 1) ** d + 1 > MAX_BOX_NODES:
            raise SizeLimit(f"box [-{n},{n}]^{d} exceeds {MAX_BOX_NODES} nodes")
    workers = threads if threads is not None else load_settings().threads

    async def _run() -> list[tuple[int, float]]:
        sem = asyncio.Semaphore(workers)

        async def _one(n: int) -> tuple[int, float]:
            async with sem:
                cap = await asyncio.to_thread(lambda: origin_capacity(box_network(d, n)))
            return n, cap

        return list(await asyncio.gather(*[_one(n) for n in chosen]))

    return asyncio.run(_run())
