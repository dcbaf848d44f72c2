from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from ohmic_cli.config import load_settings
from ohmic_cli.errors import (
    ConstantFunction,
    DomainError,
    IncompleteFamily,
    InfiniteResistanceEdge,
    SizeLimit,
    SolverFailure,
    WeightViolation,
)
from ohmic_cli.flow import Flow, dirichlet_energy, flow_from_paths
from ohmic_cli.models import CheegerResult, MixingReport, PoincareBound, SpectrumReport
from ohmic_cli.network import Network, NodeSet
from ohmic_cli.potential import disjoint_pair, all_pairs_resistance, capacity

logger = logging.getLogger(__name__)

CHEEGER_MAX_NODES = 20
RESISTANCE_MAX_NODES = 512
ITERATIVE_MAX_NODES = 1 << 21
PERIODIC_ATOL = 1e-10
SANDWICH_RTOL = 1e-8
_CHUNK = 1 << 15

WeightFn = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]

SCHEMES: dict[str, WeightFn] = {
    "w1": lambda phi, r: (phi != 0).astype(float),
    "w2": lambda phi, r: np.abs(phi),
    "w3": lambda phi, r: np.abs(r * phi),
    "w4": lambda phi, r: r * phi**2,
}


@dataclass(frozen=True, slots=True, eq=False)
class PathFamily:
    """One unitary flow from x to y for every ordered pair x != y."""

    flows: Mapping[tuple[int, int], Flow]
    kind: str = "paths"
    scheme: str = "w2"


def _symmetrized(net: Network) -> sparse.csr_matrix:
    s = 1.0 / np.sqrt(net.mu)
    return (sparse.diags(s) @ net.conductance_matrix() @ sparse.diags(s)).tocsr()


def _require_two(net: Network) -> None:
    if net.n < 2:
        raise DomainError("spectral quantities need at least two nodes")


def spectrum(net: Network, *, dense_limit: int | None = None) -> SpectrumReport:
    """
    Eigenvalues of P through the symmetric matrix D^-1/2 C D^-1/2. Above the
    dense limit only the extremal eigenvalues are computed (Lanczos).
    """
    _require_two(net)
    limit = dense_limit if dense_limit is not None else load_settings().dense_limit
    S = _symmetrized(net)
    isq = 1.0 / np.sqrt(net.mu)
    if net.n <= limit:
        w, U = np.linalg.eigh(S.toarray())
        order = np.argsort(w)[::-1]
        w, U = w[order], U[:, order]
        eigenvalues = np.clip(w, -1.0, 1.0)
        second = U[:, 1] * isq
        complete = True
    else:
        if net.n > ITERATIVE_MAX_NODES:
            raise SizeLimit(f"spectrum limited to {ITERATIVE_MAX_NODES} nodes, network has {net.n}")
        try:
            top_w, top_u = spla.eigsh(S, k=2, which="LA", tol=1e-12)
            bottom_w = spla.eigsh(S, k=1, which="SA", tol=1e-12, return_eigenvectors=False)
        except spla.ArpackNoConvergence as e:
            raise SolverFailure(f"Lanczos iteration did not converge on {net.n} nodes") from e
        order = np.argsort(top_w)[::-1]
        eigenvalues = np.clip(np.concatenate([top_w[order], bottom_w]), -1.0, 1.0)
        second = top_u[:, order[1]] * isq
        complete = False
    lam1 = float(eigenvalues[1])
    lam_min = float(eigenvalues[-1])
    lambda_bar = max(abs(lam1), abs(lam_min))
    logger.debug("spectrum: n=%d gap=%.6g lambda_bar=%.6g", net.n, 1.0 - lam1, lambda_bar)
    return SpectrumReport(
        eigenvalues=eigenvalues,
        gap=1.0 - lam1,
        lambda_bar=lambda_bar,
        periodic=bool(lambda_bar >= 1.0 - PERIODIC_ATOL),
        complete=complete,
        second_eigenvector=second,
    )


def spectral_gap(net: Network) -> float:
    return spectrum(net).gap


def variance(net: Network, f: ArrayLike) -> float:
    pi = net.mu / net.total_mass
    fv = np.asarray(f, dtype=float)
    m = float(np.dot(pi, fv))
    return float(np.dot(pi, (fv - m) ** 2))


def variational_gap_check(net: Network, f: ArrayLike) -> float:
    """D(f) / Var(f) under the probability normalization; always >= the gap."""
    fv = np.asarray(f, dtype=float)
    var = variance(net, fv)
    if var <= 1e-14 * max(1.0, float(np.max(fv**2))):
        raise ConstantFunction("variational ratio is undefined for a constant function")
    return dirichlet_energy(net, fv) / net.total_mass / var


def cheeger_constant(net: Network, *, max_nodes: int = CHEEGER_MAX_NODES) -> CheegerResult:
    """
    Exhaustive I = min over mu(A) <= 1/2 of C(A, A^c) / mu(A), mu a probability.
    Ties go to the subset with the smallest bitmask.
    """
    _require_two(net)
    n = net.n
    if n > max_nodes:
        raise SizeLimit(f"exhaustive Cheeger search limited to {max_nodes} nodes, network has {n}")
    pi = net.mu / net.total_mass
    c = net.c / net.total_mass
    bits = np.arange(n, dtype=np.int64)
    best = np.inf
    best_mask = 0
    best_mass = 0.0
    total = 1 << n
    for start in range(1, total - 1, _CHUNK):
        masks = np.arange(start, min(start + _CHUNK, total - 1), dtype=np.int64)
        member = ((masks[:, None] >> bits) & 1).astype(bool)
        mass = member.astype(float) @ pi
        cut = (member[:, net.u] ^ member[:, net.v]).astype(float) @ c
        ok = mass <= 0.5 + 1e-12
        if not ok.any():
            continue
        ratio = np.where(ok, cut / np.where(ok, mass, 1.0), np.inf)
        k = int(np.argmin(ratio))
        if ratio[k] < best:
            best = float(ratio[k])
            best_mask = int(masks[k])
            best_mass = float(mass[k])
    subset = tuple(i for i in range(n) if best_mask >> i & 1)
    return CheegerResult(constant=best, subset=subset, mass=best_mass)


def cheeger_bounds(net: Network) -> tuple[float, float]:
    I = cheeger_constant(net).constant
    return I * I / 2.0, 2.0 * I


def potential_gap_upper(net: Network, A: NodeSet | Iterable[int], B: NodeSet | Iterable[int]) -> float:
    """lambda <= C(A,B) / (mu(A) mu(B)) with mu a probability."""
    a, b = disjoint_pair(net, A, B)
    z = net.total_mass
    cap = capacity(net, a, b) / z
    return cap / (float(net.mu[a].sum()) / z * float(net.mu[b].sum()) / z)


def resistance_poincare(net: Network, *, max_nodes: int = RESISTANCE_MAX_NODES) -> float:
    """1/lambda <= 1/2 sum_{x,y} mu(x) mu(y) R(x,y) in the normalized network."""
    _require_two(net)
    if net.n > max_nodes:
        raise SizeLimit(f"resistance bound limited to {max_nodes} nodes, network has {net.n}")
    norm = net.normalized()
    R = all_pairs_resistance(norm, max_nodes=max_nodes)
    pi = norm.mu
    return float(0.5 * pi @ R @ pi)


def geodesic_family(net: Network, *, scheme: str = "w2") -> PathFamily:
    """Hop-count geodesics; BFS visits neighbors in index order."""
    flows: dict[tuple[int, int], Flow] = {}
    adj = net.adjacency
    for x in range(net.n):
        _, pred = csgraph.breadth_first_order(adj, x, directed=False, return_predecessors=True)
        for y in range(net.n):
            if y == x:
                continue
            path = [y]
            while path[-1] != x:
                path.append(int(pred[path[-1]]))
            flows[(x, y)] = flow_from_paths(net, [(path[::-1], 1.0)])
    return PathFamily(flows=flows, kind="geodesic", scheme=scheme)


def current_family(net: Network, *, scheme: str = "w1", max_nodes: int = RESISTANCE_MAX_NODES) -> PathFamily:
    """Unitary currents i_{x,y} for every ordered pair."""
    if net.n > max_nodes:
        raise SizeLimit(f"current family limited to {max_nodes} nodes, network has {net.n}")
    Lp = np.linalg.pinv(net.laplacian().toarray(), hermitian=True)
    pos = net.c > 0
    u, v, c = net.u[pos], net.v[pos], net.c[pos]
    flows: dict[tuple[int, int], Flow] = {}
    for x in range(net.n):
        for y in range(net.n):
            if x == y:
                continue
            V = Lp[:, x] - Lp[:, y]
            flows[(x, y)] = Flow(net.n, u, v, c * (V[u] - V[v]))
    return PathFamily(flows=flows, kind="current", scheme=scheme)


def flow_poincare(
    net: Network,
    family: PathFamily,
    *,
    scheme: str | WeightFn | None = None,
) -> PoincareBound:
    """
    1/lambda <= max over oriented edges e of
    sum_{x,y : phi_xy(e) > 0} mu(x) mu(y) w_xy(e) D_xy(phi_xy),
    with D_xy(phi) = sum_{phi(e) > 0} r(e) phi(e)^2 / w_xy(e).
    """
    _require_two(net)
    chosen = family.scheme if scheme is None else scheme
    if callable(chosen):
        weight_fn, name = chosen, getattr(chosen, "__name__", "custom")
    elif chosen in SCHEMES:
        weight_fn, name = SCHEMES[chosen], chosen
    else:
        raise WeightViolation(f"unknown weight scheme {chosen!r}")

    norm = net.normalized()
    pi = norm.mu
    edge_keys = norm.u * norm.n + norm.v
    forward = np.zeros(len(edge_keys))
    backward = np.zeros(len(edge_keys))
    for x in range(net.n):
        for y in range(net.n):
            if x == y:
                continue
            phi = family.flows.get((x, y))
            if phi is None:
                raise IncompleteFamily(f"family has no flow for the pair ({net.label(x)}, {net.label(y)})")
            nz = phi.values != 0
            keys = phi.u[nz] * norm.n + phi.v[nz]
            vals = phi.values[nz]
            k = np.searchsorted(edge_keys, keys)
            k = np.minimum(k, len(edge_keys) - 1)
            if np.any(edge_keys[k] != keys) or np.any(norm.c[k] <= 0):
                raise InfiniteResistanceEdge(f"flow for ({net.label(x)}, {net.label(y)}) uses a non-edge")
            r = 1.0 / norm.c[k]
            w = np.asarray(weight_fn(vals, r), dtype=float)
            if w.shape != vals.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise WeightViolation(f"weights for ({net.label(x)}, {net.label(y)}) must be positive where the flow is")
            d_xy = float(np.sum(r * vals**2 / w))
            load = pi[x] * pi[y] * w * d_xy
            np.add.at(forward, k[vals > 0], load[vals > 0])
            np.add.at(backward, k[vals < 0], load[vals < 0])
    kf = int(np.argmax(forward))
    kb = int(np.argmax(backward))
    if forward[kf] >= backward[kb]:
        bound, edge = float(forward[kf]), (int(norm.u[kf]), int(norm.v[kf]))
    else:
        bound, edge = float(backward[kb]), (int(norm.v[kb]), int(norm.u[kb]))
    return PoincareBound(scheme=name, bound=bound, bottleneck=edge)


# mixing --------------------------------------------------------------------


class _Propagator:
    """P^t and exp(t(P - I)) through one symmetric eigendecomposition."""

    def __init__(self, net: Network, dense_limit: int | None) -> None:
        limit = dense_limit if dense_limit is not None else load_settings().dense_limit
        if net.n > limit:
            raise SizeLimit(f"exact propagation limited to {limit} states, network has {net.n}")
        self.pi = net.mu / net.total_mass
        w, U = np.linalg.eigh(_symmetrized(net).toarray())
        self.w = np.clip(w, -1.0, 1.0)
        self.U = U
        self.sq = np.sqrt(net.mu)

    def matrix(self, t: float, *, continuous: bool) -> NDArray[np.float64]:
        if continuous:
            f = np.exp(t * (self.w - 1.0))
        else:
            f = self.w ** int(t)
        M = (self.U * f) @ self.U.T
        return M / self.sq[:, None] * self.sq[None, :]

    def distance(self, t: float, *, continuous: bool) -> NDArray[np.float64]:
        return 0.5 * np.abs(self.matrix(t, continuous=continuous) - self.pi[None, :]).sum(axis=1)


def transition_power(net: Network, t: float, *, continuous: bool = False, dense_limit: int | None = None) -> NDArray[np.float64]:
    return _Propagator(net, dense_limit).matrix(t, continuous=continuous)


def total_variation(net: Network, t: float, *, continuous: bool = True, dense_limit: int | None = None) -> NDArray[np.float64]:
    """||P_x^t - mu||_TV for every start x."""
    return _Propagator(net, dense_limit).distance(t, continuous=continuous)


def pairwise_total_variation(net: Network, x: int, y: int, t: int, *, dense_limit: int | None = None) -> float:
    """||P_x^t - P_y^t||_TV for the discrete chain."""
    M = _Propagator(net, dense_limit).matrix(t, continuous=False)
    return float(0.5 * np.abs(M[x] - M[y]).sum())


def mixing_time(net: Network, *, dense_limit: int | None = None, rtol: float = 1e-10) -> MixingReport:
    """
    tau_1 = inf{t : max_x ||P_x^t - mu||_TV <= 1/e} for the rate-one
    continuous-time chain, found by doubling then bisection.
    """
    _require_two(net)
    prop = _Propagator(net, dense_limit)
    target = np.exp(-1.0)

    def d(t: float) -> float:
        return float(prop.distance(t, continuous=True).max())

    lo, hi = 0.0, 1.0
    while d(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise SolverFailure("mixing time search diverged")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if d(mid) > target:
            lo = mid
        else:
            hi = mid
    tau = hi
    gap = 1.0 - float(np.sort(prop.w)[-2])
    mu_min = float(prop.pi.min())
    lower = (1.0 - np.log(2.0)) / gap
    upper = (1.0 + np.log(0.5 / np.sqrt(mu_min))) / gap
    product = float(-np.log(1.0 - gap) * tau) if gap < 1.0 else None
    if not lower * (1.0 - SANDWICH_RTOL) <= tau <= upper * (1.0 + SANDWICH_RTOL):
        logger.warning("mixing time %.6g outside its gap bounds [%.6g, %.6g]", tau, lower, upper)
    else:
        logger.debug("mixing time %.6g in [%.6g, %.6g] (gap %.6g)", tau, lower, upper, gap)
    return MixingReport(mixing_time=tau, gap=gap, lower_bound=float(lower), upper_bound=float(upper), log_gap_product=product)
