from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np
from numpy.typing import NDArray

from ohmic_cli.config import load_settings
from ohmic_cli.errors import EmptyBoundary, EmptySet, EmptyTarget, Overlap, SizeLimit, XInTargets
from ohmic_cli.flow import Flow, current_of
from ohmic_cli.network import Network, NodeSet, Potential, as_indices
from ohmic_cli.solver import GroundedLaplacian

logger = logging.getLogger(__name__)

Nodes = NodeSet | Iterable[int]


@dataclass(frozen=True, slots=True, eq=False)
class EquilibriumSolution:
    V: Potential
    capacity: float
    current: Flow
    charge: NDArray[np.float64]
    harmonic_measure: NDArray[np.float64]
    A: NodeSet
    B: NodeSet

    @property
    def resistance(self) -> float:
        return 1.0 / self.capacity

    @property
    def unitary_current(self) -> Flow:
        """i_{A,B}: the equilibrium current scaled to strength one."""
        return self.current / self.capacity

    def to_dict(self, net: Network) -> dict[str, Any]:
        return {
            "A": [net.label(x) for x in self.A],
            "B": [net.label(x) for x in self.B],
            "capacity": self.capacity,
            "resistance": self.resistance,
            "potential": {net.label(x): float(self.V[x]) for x in range(net.n)},
            "charge": {net.label(x): float(self.charge[x]) for x in range(net.n) if self.charge[x] != 0.0},
            "harmonic_measure": {net.label(x): float(self.harmonic_measure[x]) for x in self.A},
        }


def disjoint_pair(net: Network, A: Nodes, B: Nodes) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    a = as_indices(A, net.n)
    b = as_indices(B, net.n)
    if a.size == 0 or b.size == 0:
        raise EmptySet("A and B must both be nonempty")
    common = np.intersect1d(a, b)
    if common.size:
        raise Overlap(f"A and B share nodes {[net.label(int(x)) for x in common]}", nodes=common.tolist())
    return a, b


def solve_dirichlet(
    net: Network,
    boundary: Mapping[int, float],
    *,
    direct_limit: int | None = None,
) -> Potential:
    """Harmonic extension of the boundary values to the rest of the network."""
    if not boundary:
        raise EmptyBoundary("Dirichlet problem needs at least one boundary node")
    idx = as_indices(list(boundary), net.n)
    mask = np.zeros(net.n, dtype=bool)
    mask[idx] = True
    values = np.array([float(boundary[int(x)]) for x in idx])
    return GroundedLaplacian(net, mask, direct_limit=direct_limit).harmonic_extension(values)


def _equilibrium_potential(net: Network, a: NDArray[np.int64], b: NDArray[np.int64], direct_limit: int | None) -> Potential:
    if a.size + b.size == net.n:
        V = np.zeros(net.n)
        V[a] = 1.0
        return V
    mask = np.zeros(net.n, dtype=bool)
    mask[a] = True
    mask[b] = True
    values = np.where(np.isin(np.flatnonzero(mask), a), 1.0, 0.0)
    return GroundedLaplacian(net, mask, direct_limit=direct_limit).harmonic_extension(values)


def equilibrium(net: Network, A: Nodes, B: Nodes, *, direct_limit: int | None = None) -> EquilibriumSolution:
    a, b = disjoint_pair(net, A, B)
    V = _equilibrium_potential(net, a, b, direct_limit)
    adj = net.adjacency
    charge = np.zeros(net.n)
    # charge(a) = mu(a) P_a(tau_A^+ > tau_B^+) = sum_y c(a,y) (1 - V(y))
    charge[a] = adj[a] @ (1.0 - V)
    charge[b] = -(adj[b] @ V)
    capacity = float(charge[a].sum())
    harmonic = np.zeros(net.n)
    harmonic[a] = charge[a] / capacity
    logger.debug("equilibrium |A|=%d |B|=%d capacity=%.17g", a.size, b.size, capacity)
    return EquilibriumSolution(
        V=V,
        capacity=capacity,
        current=current_of(net, V),
        charge=charge,
        harmonic_measure=harmonic,
        A=NodeSet.of(a.tolist()),
        B=NodeSet.of(b.tolist()),
    )


def capacity(net: Network, A: Nodes, B: Nodes, *, direct_limit: int | None = None) -> float:
    return equilibrium(net, A, B, direct_limit=direct_limit).capacity


def effective_resistance(net: Network, A: Nodes, B: Nodes) -> float:
    return 1.0 / capacity(net, A, B)


def all_pairs_resistance(net: Network, *, max_nodes: int = 512) -> NDArray[np.float64]:
    """R(x,y) from the pseudoinverse of the Laplacian."""
    if net.n > max_nodes:
        raise SizeLimit(f"all-pairs resistance limited to {max_nodes} nodes, network has {net.n}")
    Lp = np.linalg.pinv(net.laplacian().toarray(), hermitian=True)
    d = np.diag(Lp)
    R = d[:, None] + d[None, :] - 2.0 * Lp
    np.fill_diagonal(R, 0.0)
    return R


class GreenMatrix:
    """
    G_B(x,y), the expected number of visits to y before hitting B from x.

    G_B = L_II^{-1} diag(mu_I) on the complement I of B, so columns and rows
    are single solves; the dense matrix is only built for small complements.
    """

    def __init__(self, net: Network, B: NodeSet, *, direct_limit: int | None = None) -> None:
        self.net = net
        self.B = B
        mask = B.mask(net.n)
        self._lap = GroundedLaplacian(net, mask, direct_limit=direct_limit)
        self._pos = np.full(net.n, -1, dtype=np.int64)
        self._pos[self._lap.interior] = np.arange(self._lap.size)

    @property
    def interior(self) -> NDArray[np.int64]:
        return self._lap.interior

    def _unit(self, x: int) -> NDArray[np.float64]:
        e = np.zeros(self._lap.size)
        e[self._pos[x]] = 1.0
        return e

    def row(self, x: int) -> NDArray[np.float64]:
        """G_B(x, .) as a full-length vector (zero on B)."""
        out = np.zeros(self.net.n)
        if self._pos[x] < 0:
            return out
        # L_II is symmetric, so row x of its inverse is a single solve.
        out[self.interior] = np.maximum(self._lap.solve(self._unit(x)), 0.0) * self.net.mu[self.interior]
        return out

    def column(self, y: int) -> NDArray[np.float64]:
        """G_B(., y) as a full-length vector (zero on B)."""
        out = np.zeros(self.net.n)
        if self._pos[y] < 0:
            return out
        out[self.interior] = np.maximum(self._lap.solve(self._unit(y)), 0.0) * self.net.mu[y]
        return out

    def __getitem__(self, xy: tuple[int, int]) -> float:
        x, y = xy
        return float(self.row(x)[y])

    def apply_inverse(self, rhs: NDArray[np.float64]) -> NDArray[np.float64]:
        """L_II^{-1} applied to a full-length vector; the result is zero on B."""
        out = np.zeros(self.net.n)
        out[self.interior] = self._lap.solve(np.asarray(rhs, dtype=float)[self.interior])
        return out

    def dense(self, *, dense_limit: int | None = None) -> NDArray[np.float64]:
        limit = dense_limit if dense_limit is not None else load_settings().dense_limit
        if self._lap.size > limit:
            raise SizeLimit(f"dense Green matrix limited to {limit} unknowns, have {self._lap.size}")
        G = np.zeros((self.net.n, self.net.n))
        for y in self.interior:
            G[:, y] = self.column(int(y))
        return G


def green_function(net: Network, B: Nodes, *, direct_limit: int | None = None) -> GreenMatrix:
    b = as_indices(B, net.n)
    if b.size == 0:
        raise EmptyTarget("Green function needs a nonempty target set")
    if b.size == net.n:
        raise EmptySet("target set covers every node")
    return GreenMatrix(net, NodeSet.of(b.tolist()), direct_limit=direct_limit)


def last_exit_check(net: Network, A: Nodes, B: Nodes, x: int) -> tuple[float, float]:
    """
    Both sides of P_x(tau_A < tau_B) = sum_a G_B(x,a) P_a(tau_A^+ > tau_B^+).

    The right side uses an independent solve with the charge as source.
    """
    sol = equilibrium(net, A, B)
    lhs = float(sol.V[x])
    source = np.zeros(net.n)
    source[sol.A.array()] = sol.charge[sol.A.array()]
    rhs = float(green_function(net, sol.B).apply_inverse(source)[x])
    return lhs, rhs


def expected_visits(net: Network, A: Nodes, B: Nodes) -> NDArray[np.float64]:
    """E_{nu_A}[visits to x before tau_B] = mu(x) V_{A,B}(x) / C(A,B)."""
    sol = equilibrium(net, A, B)
    return net.mu * sol.V / sol.capacity


def hitting_time_from_harmonic(net: Network, A: Nodes, B: Nodes) -> float:
    """E_{nu_A}[tau_B] = mu(V_{A,B}) / C(A,B) in discrete steps."""
    sol = equilibrium(net, A, B)
    return float(np.dot(net.mu, sol.V) / sol.capacity)


def hitting_times(net: Network, B: Nodes, *, direct_limit: int | None = None) -> NDArray[np.float64]:
    """h(x) = E_x[tau_B] for every x: (I - P) h = 1 off B, h = 0 on B."""
    b = as_indices(B, net.n)
    if b.size == 0:
        raise EmptyTarget("hitting time needs a nonempty target set")
    h = np.zeros(net.n)
    if b.size == net.n:
        return h
    mask = np.zeros(net.n, dtype=bool)
    mask[b] = True
    lap = GroundedLaplacian(net, mask, direct_limit=direct_limit)
    h[lap.interior] = np.maximum(lap.solve(net.mu[lap.interior]), 0.0)
    return h


def hitting_time_exact(net: Network, x: int, B: Nodes) -> float:
    return float(hitting_times(net, B)[x])


def pwc_bound(net: Network, x: int, A: Nodes, B: Nodes) -> float:
    """Upper bound C({x},A) / C({x},B) on P_x(tau_A < tau_B)."""
    a, b = disjoint_pair(net, A, B)
    if x in set(a.tolist()) | set(b.tolist()):
        raise XInTargets(f"node {net.label(x)} lies in A or B")
    return capacity(net, [x], a) / capacity(net, [x], b)
