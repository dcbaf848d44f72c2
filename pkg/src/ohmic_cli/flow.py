from __future__ import annotations

import logging
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse import csgraph

from ohmic_cli.errors import (
    BadBoundaryValues,
    BrokenPath,
    CycleViolation,
    InfiniteResistanceEdge,
    NotAFlowFromAToB,
    NotUnitary,
    WeightsNotNormalized,
)
from ohmic_cli.network import Network, NodeSet, Potential, as_indices

logger = logging.getLogger(__name__)

UNITARY_ATOL = 1e-10
CYCLE_ATOL = 1e-10
BOUNDARY_ATOL = 1e-12


class Flow:
    """
    Antisymmetric function on ordered node pairs.

    Stored once per unordered pair {x, y} as the value of the oriented pair
    (min, max); the opposite orientation is the negative. Pairs need not be
    edges of any network.
    """

    __slots__ = ("n", "u", "v", "values")

    def __init__(self, n: int, u: NDArray[np.int64], v: NDArray[np.int64], values: NDArray[np.float64]) -> None:
        self.n = int(n)
        self.u = u
        self.v = v
        self.values = values

    @classmethod
    def from_directed(cls, n: int, x: ArrayLike, y: ArrayLike, values: ArrayLike) -> "Flow":
        """Sum of oriented contributions value_k on (x_k -> y_k)."""
        xs = np.asarray(x, dtype=np.int64).ravel()
        ys = np.asarray(y, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(values, dtype=float), xs.shape).ravel()
        keep = xs != ys
        xs, ys, vals = xs[keep], ys[keep], vals[keep]
        sign = np.where(xs < ys, 1.0, -1.0)
        lo = np.minimum(xs, ys)
        hi = np.maximum(xs, ys)
        keys = lo * n + hi
        uniq, inv = np.unique(keys, return_inverse=True)
        summed = np.bincount(inv, weights=sign * vals, minlength=len(uniq))
        return cls(n, uniq // n, uniq % n, summed)

    @classmethod
    def zero(cls, n: int) -> "Flow":
        empty = np.zeros(0, dtype=np.int64)
        return cls(n, empty, empty.copy(), np.zeros(0))

    def value(self, x: int, y: int) -> float:
        if x == y:
            return 0.0
        lo, hi = (x, y) if x < y else (y, x)
        key = lo * self.n + hi
        keys = self.u * self.n + self.v
        k = int(np.searchsorted(keys, key))
        if k < len(keys) and keys[k] == key:
            val = float(self.values[k])
            return val if x < y else -val
        return 0.0

    def divergence(self) -> NDArray[np.float64]:
        """div_x = sum of phi over pairs leaving x, for every node."""
        div = np.zeros(self.n)
        np.add.at(div, self.u, self.values)
        np.add.at(div, self.v, -self.values)
        return div

    def _combine(self, other: "Flow", sign: float) -> "Flow":
        if other.n != self.n:
            raise ValueError("flows live on different node sets")
        return Flow.from_directed(
            self.n,
            np.concatenate([self.u, other.u]),
            np.concatenate([self.v, other.v]),
            np.concatenate([self.values, sign * other.values]),
        )

    def __add__(self, other: "Flow") -> "Flow":
        return self._combine(other, 1.0)

    def __sub__(self, other: "Flow") -> "Flow":
        return self._combine(other, -1.0)

    def __neg__(self) -> "Flow":
        return Flow(self.n, self.u, self.v, -self.values)

    def __mul__(self, k: float) -> "Flow":
        return Flow(self.n, self.u, self.v, float(k) * self.values)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "Flow":
        return Flow(self.n, self.u, self.v, self.values / float(k))

    def items(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(w)) for a, b, w in zip(self.u, self.v, self.values)]

    def __repr__(self) -> str:
        return f"Flow(n={self.n}, pairs={len(self.values)})"


def divergence(flow: Flow, x: int) -> float:
    return float(flow.divergence()[x])


def _scale(flow: Flow) -> float:
    return max(1.0, float(np.max(np.abs(flow.values)))) if len(flow.values) else 1.0


def strength(flow: Flow, A: NodeSet | Iterable[int], B: NodeSet | Iterable[int]) -> float:
    a = as_indices(A, flow.n)
    b = as_indices(B, flow.n)
    div = flow.divergence()
    tol = UNITARY_ATOL * _scale(flow)
    outside = np.ones(flow.n, dtype=bool)
    outside[a] = False
    outside[b] = False
    if outside.any() and np.max(np.abs(div[outside])) > tol:
        x = int(np.flatnonzero(outside)[np.argmax(np.abs(div[outside]))])
        raise NotAFlowFromAToB(f"divergence {div[x]!r} at node {x} outside A and B", node=x)
    src = float(div[a].sum())
    sink = float(div[b].sum())
    if src < -tol or sink > tol:
        raise NotAFlowFromAToB(f"flow runs the wrong way: source sum {src!r}, sink sum {sink!r}")
    return max(abs(src), abs(sink))


def stokes_flux(net: Network, flow: Flow, K: NodeSet | Iterable[int]) -> tuple[float, float]:
    """(sum of phi over pairs leaving K, sum of divergences in K)."""
    k = as_indices(K, net.n)
    inside = np.zeros(net.n, dtype=bool)
    inside[k] = True
    iu = inside[flow.u]
    iv = inside[flow.v]
    boundary = float(flow.values[iu & ~iv].sum() - flow.values[iv & ~iu].sum())
    return boundary, float(flow.divergence()[k].sum())


def current_of(net: Network, V: ArrayLike) -> Flow:
    """Ohm's law: i(x,y) = c(x,y) (V(x) - V(y))."""
    f = np.asarray(V, dtype=float)
    pos = net.c > 0
    u, v, c = net.u[pos], net.v[pos], net.c[pos]
    return Flow(net.n, u.copy(), v.copy(), c * (f[u] - f[v]))


def _pair_conductances(net: Network, flow: Flow) -> NDArray[np.float64]:
    c = net.conductances_of(flow.u, flow.v)
    off = (c <= 0) & (flow.values != 0)
    if off.any():
        k = int(np.flatnonzero(off)[0])
        raise InfiniteResistanceEdge(
            f"flow {flow.values[k]!r} on ({net.label(int(flow.u[k]))}, {net.label(int(flow.v[k]))}) "
            "which carries no conductance",
            pair=(int(flow.u[k]), int(flow.v[k])),
        )
    return c


def potential_of(net: Network, flow: Flow) -> Potential:
    """
    Integrate r*phi along a BFS spanning tree rooted at node 0 (neighbors in
    index order) and check the second Kirchhoff law on every other edge.
    """
    _pair_conductances(net, flow)
    order, pred = csgraph.breadth_first_order(net.adjacency, 0, directed=False, return_predecessors=True)
    V = np.zeros(net.n)
    for x in order[1:]:
        p = int(pred[x])
        c = net.conductance(p, int(x))
        V[x] = V[p] - flow.value(p, int(x)) / c
    pos = net.c > 0
    u, v, c = net.u[pos], net.v[pos], net.c[pos]
    phi = np.zeros(len(u))
    if len(flow.values):
        keys = flow.u * net.n + flow.v
        edge_keys = u * net.n + v
        k = np.searchsorted(keys, edge_keys)
        k = np.minimum(k, len(keys) - 1)
        hit = keys[k] == edge_keys
        phi[hit] = flow.values[k[hit]]
    drops = phi / c
    residual = (V[u] - V[v]) - drops
    tol = CYCLE_ATOL * max(1.0, float(np.max(np.abs(drops))) if len(drops) else 1.0)
    if len(residual) and np.max(np.abs(residual)) > tol:
        e = int(np.argmax(np.abs(residual)))
        cycle = _tree_cycle(pred, int(u[e]), int(v[e]))
        raise CycleViolation(
            f"cycle sum {residual[e]!r} around {[net.label(x) for x in cycle]}",
            cycle=cycle,
            residual=float(residual[e]),
        )
    return V


def _tree_cycle(pred: NDArray[np.int32], x: int, y: int) -> list[int]:
    def _to_root(z: int) -> list[int]:
        path = [z]
        while pred[z] >= 0:
            z = int(pred[z])
            path.append(z)
        return path

    px, py = _to_root(x), _to_root(y)
    on_py = set(py)
    lca = next(z for z in px if z in on_py)
    head = px[: px.index(lca) + 1]
    tail = py[: py.index(lca)]
    return head + tail[::-1] + [x]


def energy(net: Network, flow: Flow) -> float:
    """D(phi) = 1/2 sum over oriented pairs of r phi^2."""
    c = _pair_conductances(net, flow)
    nz = flow.values != 0
    return float(np.sum(flow.values[nz] ** 2 / c[nz]))


def dirichlet_energy(net: Network, f: ArrayLike) -> float:
    fv = np.asarray(f, dtype=float)
    return float(np.sum(net.c * (fv[net.u] - fv[net.v]) ** 2))


def dirichlet_upper_bound(net: Network, A: NodeSet | Iterable[int], B: NodeSet | Iterable[int], f: ArrayLike) -> float:
    fv = np.asarray(f, dtype=float)
    a = as_indices(A, net.n)
    b = as_indices(B, net.n)
    if fv.shape != (net.n,):
        raise BadBoundaryValues(f"potential has shape {fv.shape}, expected ({net.n},)")
    if np.any(np.abs(fv[a] - 1.0) > BOUNDARY_ATOL) or np.any(np.abs(fv[b]) > BOUNDARY_ATOL):
        raise BadBoundaryValues("test potential must equal 1 on A and 0 on B")
    return dirichlet_energy(net, fv)


def check_unitary(flow: Flow, A: NodeSet | Iterable[int], B: NodeSet | Iterable[int]) -> None:
    a = as_indices(A, flow.n)
    b = as_indices(B, flow.n)
    div = flow.divergence()
    outside = np.ones(flow.n, dtype=bool)
    outside[a] = False
    outside[b] = False
    if outside.any() and np.max(np.abs(div[outside])) > UNITARY_ATOL:
        raise NotUnitary("flow has nonzero divergence outside A and B")
    if abs(div[a].sum() - 1.0) > UNITARY_ATOL or abs(div[b].sum() + 1.0) > UNITARY_ATOL:
        raise NotUnitary(f"flow strength is {div[a].sum()!r} out of A and {-div[b].sum()!r} into B")


def thomson_lower_bound(net: Network, A: NodeSet | Iterable[int], B: NodeSet | Iterable[int], flow: Flow) -> float:
    check_unitary(flow, A, B)
    return 1.0 / energy(net, flow)


def flow_from_paths(net: Network, paths: Sequence[tuple[Sequence[int], float]]) -> Flow:
    """Weighted average of the unit flows along each path."""
    weights = np.array([float(w) for _, w in paths])
    if len(weights) == 0 or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise WeightsNotNormalized(f"path weights must be nonnegative and sum to 1, got {weights.tolist()}")
    xs: list[NDArray[np.int64]] = []
    ys: list[NDArray[np.int64]] = []
    ws: list[NDArray[np.float64]] = []
    for path, w in paths:
        p = np.asarray(path, dtype=np.int64)
        if p.size < 2:
            raise BrokenPath(f"path {list(path)} has no edge")
        if p.min() < 0 or p.max() >= net.n:
            raise BrokenPath(f"path {list(path)} leaves the node range")
        c = net.conductances_of(p[:-1], p[1:])
        if np.any(c <= 0):
            k = int(np.flatnonzero(c <= 0)[0])
            raise BrokenPath(f"path step {int(p[k])} -> {int(p[k + 1])} is not an edge")
        xs.append(p[:-1])
        ys.append(p[1:])
        ws.append(np.full(p.size - 1, float(w)))
    return Flow.from_directed(net.n, np.concatenate(xs), np.concatenate(ys), np.concatenate(ws))
