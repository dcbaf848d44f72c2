from __future__ import annotations

import asyncio
import heapq
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.sparse import csgraph
from scipy.special import logsumexp

from ohmic_cli.config import load_settings
from ohmic_cli.errors import DegenerateRatio, DomainError, GateMismatch, NegativeSelfLoop, SizeLimit
from ohmic_cli.models import LandscapeReport, NucleationReport
from ohmic_cli.network import Network, induced, lump
from ohmic_cli.potential import equilibrium, hitting_times

logger = logging.getLogger(__name__)

EXACT_MAX_SITES = 16
DEFAULT_BETAS = (2.0, 3.0, 4.0, 5.0, 6.0, 8.0)
ENERGY_ATOL = 1e-9


@dataclass(frozen=True, slots=True)
class GlauberParams:
    L: int
    J: float
    h: float
    beta: float = 1.0

    def __post_init__(self) -> None:
        if self.L < 2:
            raise DomainError(f"torus side must be >= 2, got {self.L}")
        if self.J <= 0 or self.h <= 0 or self.beta <= 0:
            raise DomainError("J, h and beta must be positive")
        critical_length(self.J, self.h)

    @property
    def sites(self) -> int:
        return self.L * self.L

    def with_beta(self, beta: float) -> "GlauberParams":
        return GlauberParams(L=self.L, J=self.J, h=self.h, beta=beta)


@dataclass(frozen=True, slots=True)
class SpinConfig:
    """Bit k of `index` is +1 at site k = row * L + col."""

    index: int
    L: int

    @staticmethod
    def from_spins(spins: ArrayLike) -> "SpinConfig":
        s = np.asarray(spins).reshape(-1)
        L = math.isqrt(s.size)
        if L * L != s.size or not np.all(np.isin(s, (-1, 1))):
            raise DomainError("spin configuration must be a square array of +-1")
        bits = (s > 0).astype(np.int64)
        return SpinConfig(index=int(np.sum(bits << np.arange(s.size, dtype=np.int64))), L=L)

    def spins(self) -> NDArray[np.int8]:
        k = np.arange(self.L * self.L, dtype=np.int64)
        return (((self.index >> k) & 1) * 2 - 1).astype(np.int8).reshape(self.L, self.L)

    def flip(self, site: int) -> "SpinConfig":
        return SpinConfig(index=self.index ^ (1 << site), L=self.L)


def critical_length(J: float, h: float) -> int:
    """l_c = ceil(2J / h), defined when 2J/h > 1 is not an integer."""
    ratio = 2.0 * J / h
    if ratio <= 1.0 or abs(ratio - round(ratio)) < 1e-12:
        raise DegenerateRatio(f"2J/h = {ratio!r} must exceed 1 and not be an integer")
    return int(math.ceil(ratio))


@lru_cache(maxsize=8)
def torus_bonds(L: int) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Unordered nearest-neighbor pairs of the L x L torus, each listed once."""
    pairs: set[tuple[int, int]] = set()
    for r in range(L):
        for col in range(L):
            s = r * L + col
            for t in (r * L + (col + 1) % L, ((r + 1) % L) * L + col):
                if t != s:
                    pairs.add((min(s, t), max(s, t)))
    ordered = sorted(pairs)
    return np.array([p[0] for p in ordered]), np.array([p[1] for p in ordered])


def hamiltonian(params: GlauberParams, config: SpinConfig | ArrayLike) -> float:
    """H = -(J/2) sum over bonds of s_x s_y - (h/2) sum of s_x."""
    s = config.spins() if isinstance(config, SpinConfig) else np.asarray(config)
    s = s.reshape(-1).astype(float)
    u, v = torus_bonds(params.L)
    return float(-0.5 * params.J * np.sum(s[u] * s[v]) - 0.5 * params.h * np.sum(s))


def _require_exact(params: GlauberParams) -> None:
    if params.sites > EXACT_MAX_SITES:
        raise SizeLimit(f"exact mode needs L^2 <= {EXACT_MAX_SITES}, got L={params.L}")


def all_energies(params: GlauberParams) -> NDArray[np.float64]:
    """H for every configuration index, from bond disagreements and plus count."""
    _require_exact(params)
    N = params.sites
    idx = np.arange(1 << N, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(N, dtype=np.int64)) & 1
    u, v = torus_bonds(params.L)
    broken = (bits[:, u] != bits[:, v]).sum(axis=1)
    plus = bits.sum(axis=1)
    bonds = len(u)
    return -0.5 * params.J * (bonds - 2.0 * broken) - 0.5 * params.h * (2.0 * plus - N)


def flip_edges(L: int) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Single spin-flip pairs (x, x | bit) with bit off in x."""
    N = L * L
    idx = np.arange(1 << N, dtype=np.int64)
    us: list[NDArray[np.int64]] = []
    vs: list[NDArray[np.int64]] = []
    for k in range(N):
        low = idx[(idx >> k) & 1 == 0]
        us.append(low)
        vs.append(low | (1 << k))
    return np.concatenate(us), np.concatenate(vs)


def metropolis_network(params: GlauberParams) -> Network:
    """
    Metropolis single spin-flip chain with N = L^2 as proposal normalizer:
    c(x,y) = exp(-beta max(H(x), H(y))) / (N Z), self-loops completing mu = Gibbs.
    """
    _require_exact(params)
    N = params.sites
    H = all_energies(params)
    log_z = float(logsumexp(-params.beta * H))
    u, v = flip_edges(params.L)
    c = np.exp(-params.beta * np.maximum(H[u], H[v]) - math.log(N) - log_z)
    mu = np.exp(-params.beta * H - log_z)
    rate_sum = np.zeros(1 << N)
    dH = H[v] - H[u]
    np.add.at(rate_sum, u, np.exp(-params.beta * np.maximum(dH, 0.0)))
    np.add.at(rate_sum, v, np.exp(-params.beta * np.maximum(-dH, 0.0)))
    loops = mu * (1.0 - rate_sum / N)
    if np.any(loops < 0):
        raise NegativeSelfLoop(f"self-loop {loops.min()!r} below zero")
    logger.debug("metropolis network: %d states, beta=%g, log Z=%.6g", 1 << N, params.beta, log_z)
    return Network.from_arrays(1 << N, u, v, c, loops)


def _flip_neighbors(x: int, N: int) -> list[int]:
    return [x ^ (1 << k) for k in range(N)]


def communication_heights(params: GlauberParams, source: int) -> NDArray[np.float64]:
    """Phi(source, y) for every y: minimax energy along flip paths (Dijkstra)."""
    _require_exact(params)
    H = all_energies(params).tolist()
    N = params.sites
    best = [math.inf] * (1 << N)
    best[source] = H[source]
    heap = [(H[source], source)]
    done = [False] * (1 << N)
    while heap:
        level, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        for y in _flip_neighbors(x, N):
            cand = level if level >= H[y] else H[y]
            if cand < best[y]:
                best[y] = cand
                heapq.heappush(heap, (cand, y))
    return np.array(best)


def communication_height(params: GlauberParams, x: int, y: int) -> float:
    """Phi(x, y); ties in the heap are broken by configuration index."""
    _require_exact(params)
    H = all_energies(params).tolist()
    N = params.sites
    best = {x: H[x]}
    heap = [(H[x], x)]
    done: set[int] = set()
    while heap:
        level, z = heapq.heappop(heap)
        if z == y:
            return float(level)
        if z in done:
            continue
        done.add(z)
        for w in _flip_neighbors(z, N):
            cand = level if level >= H[w] else H[w]
            if cand < best.get(w, math.inf):
                best[w] = cand
                heapq.heappush(heap, (cand, w))
    raise GateMismatch(f"configuration {y} unreachable from {x}")


def _sublevel_components(L: int, keep: NDArray[np.bool_]) -> NDArray[np.int32]:
    u, v = flip_edges(L)
    both = keep[u] & keep[v]
    n = keep.size
    g = sparse.coo_matrix((np.ones(int(both.sum())), (u[both], v[both])), shape=(n, n))
    _, comp = csgraph.connected_components(g, directed=False)
    return comp


def droplet_shapes(L: int, lc: int) -> frozenset[int]:
    """
    Quasi-squares (lc-1) x lc in both orientations with one protuberance on a
    long side, in every torus translation, as configuration indices.
    """
    shapes: set[int] = set()
    for rows, cols in ((lc - 1, lc), (lc, lc - 1)):
        long_horizontal = cols >= rows
        for r0 in range(L):
            for c0 in range(L):
                rect = {((r0 + i) % L, (c0 + j) % L) for i in range(rows) for j in range(cols)}
                if long_horizontal:
                    slots = [(r0 - 1, c0 + j) for j in range(cols)] + [(r0 + rows, c0 + j) for j in range(cols)]
                else:
                    slots = [(r0 + i, c0 - 1) for i in range(rows)] + [(r0 + i, c0 + cols) for i in range(rows)]
                for pr, pc in slots:
                    cell = (pr % L, pc % L)
                    if cell in rect:
                        continue
                    sites = rect | {cell}
                    shapes.add(sum(1 << (a * L + b) for a, b in sites))
    return frozenset(shapes)


def landscape(params: GlauberParams) -> LandscapeReport:
    """
    Energy landscape between a (all minus) and b (all plus): communication
    height, the strict sublevel cycles of a and b, and the gate of
    configurations at that height adjacent to both cycles.
    """
    _require_exact(params)
    N = params.sites
    lc = critical_length(params.J, params.h)
    H = all_energies(params)
    a, b = 0, (1 << N) - 1
    phi = communication_height(params, a, b)
    below = H < phi - ENERGY_ATOL
    comp = _sublevel_components(params.L, below)
    cycle_a = np.flatnonzero(below & (comp == comp[a]))
    cycle_b = np.flatnonzero(below & (comp == comp[b]))
    if comp[a] == comp[b]:
        raise GateMismatch("a and b share a sublevel component below their communication height")

    in_a = np.zeros(1 << N, dtype=bool)
    in_a[cycle_a] = True
    in_b = np.zeros(1 << N, dtype=bool)
    in_b[cycle_b] = True
    level = np.flatnonzero(np.abs(H - phi) <= ENERGY_ATOL)
    bits = np.int64(1) << np.arange(N, dtype=np.int64)
    neighbors = level[:, None] ^ bits[None, :]
    gate = level[in_a[neighbors].any(axis=1) & in_b[neighbors].any(axis=1)]
    if gate.size == 0:
        raise GateMismatch("no configuration at the communication height touches both cycles")

    shapes = droplet_shapes(params.L, lc)
    droplets = sum(1 for g in gate.tolist() if g in shapes)
    formula = 4 * lc * N
    if gate.size != formula or droplets != gate.size:
        logger.warning(
            "gate has %d members (%d droplets of the critical shape); the combinatorial count is %d",
            gate.size,
            droplets,
            formula,
        )

    depths = communication_heights(params, b) - H
    others = np.ones(1 << N, dtype=bool)
    others[[a, b]] = False
    return LandscapeReport(
        L=params.L,
        J=params.J,
        h=params.h,
        a=a,
        b=b,
        energy_a=float(H[a]),
        energy_b=float(H[b]),
        communication_height=phi,
        gamma=phi - float(H[a]),
        critical_length=lc,
        cycle_a=tuple(cycle_a.tolist()),
        cycle_b=tuple(cycle_b.tolist()),
        gate=tuple(gate.tolist()),
        gate_count=int(gate.size),
        droplet_count=int(droplets),
        gate_count_formula=formula,
        deepest_other_well=float(depths[others].max()),
        b_is_ground_state=bool(int(np.argmin(H)) == b and np.sum(np.abs(H - H[b]) <= ENERGY_ATOL) == 1),
    )


def predicted_nucleation_time(params: GlauberParams, report: LandscapeReport | None = None) -> float:
    """3 l_c exp(Gamma beta) / ((2 l_c - 1) |G|) with |G| = 4 l_c L^2."""
    rep = report or landscape(params)
    lc = rep.critical_length
    return 3.0 * lc * math.exp(rep.gamma * params.beta) / ((2 * lc - 1) * rep.gate_count_formula)


@lru_cache(maxsize=8)
def symmetry_orbits(L: int) -> NDArray[np.int64]:
    """
    Orbit id (smallest index in the orbit) of every configuration under the
    torus translations, rotations and reflections.
    """
    N = L * L
    idx = np.arange(1 << N, dtype=np.int64)
    rows, cols = np.divmod(np.arange(N), L)
    best = idx.copy()
    for dr in range(L):
        for dc in range(L):
            for swap in (False, True):
                for fr in (False, True):
                    for fc in (False, True):
                        r, c = (cols, rows) if swap else (rows, cols)
                        r = (L - 1 - r) if fr else r
                        c = (L - 1 - c) if fc else c
                        target = ((r + dr) % L) * L + (c + dc) % L
                        image = np.zeros_like(idx)
                        for k in range(N):
                            image |= ((idx >> k) & 1) << int(target[k])
                        np.minimum(best, image, out=best)
    return best


def _lumped(net: Network, orbits: NDArray[np.int64], keep: NDArray[np.int64] | None = None):
    """Lump `net` (or its sub-network on `keep`) by orbit; returns (network, block of each state)."""
    labels = orbits if keep is None else orbits[keep]
    uniq, block = np.unique(labels, return_inverse=True)
    target = net if keep is None else induced(net, keep)
    return lump(target, block), block, uniq


def exact_nucleation_time(params: GlauberParams, report: LandscapeReport | None = None) -> NucleationReport:
    """
    Exact mean nucleation times at params.beta in continuous Glauber time
    (discrete steps divided by N):

    - formula value mu(V_{A,B}) / (N C(A,B)),
    - direct E_a[tau_b] from the hitting-time equations,
    - the nu_A-weighted direct hitting time of B,
    together with the full and reduced (A u G u B) capacities.

    Every quantity involved is invariant under the torus symmetries, so the
    solves run on the orbit-lumped network.
    """
    _require_exact(params)
    rep = report or landscape(params)
    N = params.sites
    net = metropolis_network(params)
    orbits = symmetry_orbits(params.L)
    small, block, _ = _lumped(net, orbits)
    A = np.unique(block[list(rep.cycle_a)])
    B = np.unique(block[list(rep.cycle_b)])
    sol = equilibrium(small, A, B)
    formula = float(np.dot(small.mu, sol.V) / sol.capacity) / N
    to_b = hitting_times(small, [int(block[rep.b])])
    direct = float(to_b[int(block[rep.a])]) / N
    to_B = hitting_times(small, B)
    harmonic_direct = float(np.dot(sol.harmonic_measure, to_B)) / N

    keep = np.unique(np.concatenate([rep.cycle_a, rep.gate, rep.cycle_b])).astype(np.int64)
    reduced, rblock, _ = _lumped(net, orbits, keep)
    pos = np.full(1 << N, -1, dtype=np.int64)
    pos[keep] = np.arange(keep.size)
    rA = np.unique(rblock[pos[list(rep.cycle_a)]])
    rB = np.unique(rblock[pos[list(rep.cycle_b)]])
    reduced_cap = equilibrium(reduced, rA, rB).capacity

    predicted = predicted_nucleation_time(params, rep)
    return NucleationReport(
        beta=params.beta,
        exact_mean_formula=formula,
        exact_mean_direct=direct,
        harmonic_start_direct=harmonic_direct,
        formula_ratio=formula / direct,
        predicted=predicted,
        predicted_ratio=direct / predicted,
        log_slope=math.log(direct) / params.beta,
        capacity_full=sol.capacity,
        capacity_reduced=reduced_cap,
        capacity_ratio=sol.capacity / reduced_cap,
    )


def glauber_sweep(
    params: GlauberParams,
    betas: Sequence[float] = DEFAULT_BETAS,
    *,
    threads: int | None = None,
    on_done: Callable[[NucleationReport], None] | None = None,
) -> tuple[LandscapeReport, list[NucleationReport]]:
    """Landscape once, then one exact solve per beta (concurrently, input order kept)."""
    rep = landscape(params)
    workers = threads if threads is not None else load_settings().threads

    async def _run() -> list[NucleationReport]:
        sem = asyncio.Semaphore(workers)

        async def _one(beta: float) -> NucleationReport:
            async with sem:
                res = await asyncio.to_thread(exact_nucleation_time, params.with_beta(beta), rep)
            if on_done is not None:
                on_done(res)
            return res

        return list(await asyncio.gather(*[_one(float(b)) for b in betas]))

    return rep, asyncio.run(_run())
