from __future__ import annotations

import networkx as nx
import numpy as np
import pytest

from ohmic_cli.errors import (
    BadBoundaryValues,
    BrokenPath,
    CycleViolation,
    InfiniteResistanceEdge,
    NotAFlowFromAToB,
    NotUnitary,
    WeightsNotNormalized,
)
from ohmic_cli.flow import (
    Flow,
    check_unitary,
    current_of,
    dirichlet_upper_bound,
    divergence,
    energy,
    flow_from_paths,
    potential_of,
    stokes_flux,
    strength,
    thomson_lower_bound,
)
from ohmic_cli.network import Network
from ohmic_cli.potential import equilibrium


def test_flow_is_antisymmetric() -> None:
    phi = Flow.from_directed(3, [0, 2], [1, 1], [2.0, 0.5])
    assert phi.value(0, 1) == 2.0
    assert phi.value(1, 0) == -2.0
    assert phi.value(1, 2) == -0.5
    assert phi.value(0, 2) == 0.0
    assert (phi - phi).value(0, 1) == 0.0
    assert (-phi).value(0, 1) == -2.0
    assert (2 * phi).value(2, 1) == 1.0


def test_contributions_in_both_orientations_cancel() -> None:
    phi = Flow.from_directed(2, [0, 1], [1, 0], [1.0, 0.25])
    assert phi.value(0, 1) == 0.75
    assert divergence(phi, 0) == 0.75
    assert divergence(phi, 1) == -0.75


def test_unitary_current_on_path(p4: Network) -> None:
    i = equilibrium(p4, [0], [3]).unitary_current
    for x in range(3):
        assert i.value(x, x + 1) == pytest.approx(1.0)
    assert strength(i, [0], [3]) == pytest.approx(1.0)
    assert energy(p4, i) == pytest.approx(3.0)


def test_triangle_current_split(t3: Network) -> None:
    i = equilibrium(t3, [0], [1]).unitary_current
    assert i.value(0, 1) == pytest.approx(2 / 3)
    assert i.value(0, 2) == pytest.approx(1 / 3)
    assert i.value(2, 1) == pytest.approx(1 / 3)
    assert energy(t3, i) == pytest.approx(2 / 3)


def test_strength_rejects_interior_sources(p4: Network) -> None:
    leaky = Flow.from_directed(4, [0], [1], [1.0])
    with pytest.raises(NotAFlowFromAToB):
        strength(leaky, [0], [3])
    backwards = Flow.from_directed(4, [3, 2, 1], [2, 1, 0], [1.0, 1.0, 1.0])
    with pytest.raises(NotAFlowFromAToB):
        strength(backwards, [0], [3])


def test_stokes_flux_matches_divergence(corpus: list[Network]) -> None:
    for seed, net in enumerate(corpus):
        rng = np.random.default_rng(seed)
        phi = current_of(net, rng.normal(size=net.n))
        for _ in range(4):
            K = np.flatnonzero(rng.random(net.n) < rng.uniform(0.1, 0.9)).tolist() or [0]
            out, inside = stokes_flux(net, phi, K)
            assert out == pytest.approx(inside, abs=1e-9)


def test_potential_of_current(t3: Network) -> None:
    i = equilibrium(t3, [0], [1]).unitary_current
    assert potential_of(t3, i).tolist() == pytest.approx([0.0, -2 / 3, -1 / 3])


def test_circulation_violates_cycle_law(t3: Network) -> None:
    loop = Flow.from_directed(3, [0, 1, 2], [1, 2, 0], [1.0, 1.0, 1.0])
    with pytest.raises(CycleViolation) as e:
        potential_of(t3, loop)
    cycle = e.value.context["cycle"]
    assert cycle[0] == cycle[-1]
    assert sorted(set(cycle)) == [0, 1, 2]


def test_energy_refuses_non_edges(p4: Network) -> None:
    jump = Flow.from_directed(4, [0], [2], [1.0])
    with pytest.raises(InfiniteResistanceEdge):
        energy(p4, jump)


def test_dirichlet_upper_bound(p4: Network) -> None:
    linear = [1.0, 2 / 3, 1 / 3, 0.0]
    assert dirichlet_upper_bound(p4, [0], [3], linear) == pytest.approx(1 / 3)
    assert dirichlet_upper_bound(p4, [0], [3], [1.0, 1.0, 0.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(BadBoundaryValues):
        dirichlet_upper_bound(p4, [0], [3], [0.9, 0.5, 0.2, 0.0])


def test_thomson_lower_bound(t3: Network) -> None:
    direct = flow_from_paths(t3, [([0, 1], 1.0)])
    assert thomson_lower_bound(t3, [0], [1], direct) == pytest.approx(1.0)
    split = flow_from_paths(t3, [([0, 1], 2 / 3), ([0, 2, 1], 1 / 3)])
    assert thomson_lower_bound(t3, [0], [1], split) == pytest.approx(1.5)
    half = flow_from_paths(t3, [([0, 1], 0.5), ([0, 2, 1], 0.5)])
    assert thomson_lower_bound(t3, [0], [1], half) == pytest.approx(4 / 3)
    with pytest.raises(NotUnitary):
        check_unitary(direct * 0.5, [0], [1])


def test_flow_from_paths_validation(p4: Network) -> None:
    with pytest.raises(BrokenPath):
        flow_from_paths(p4, [([0, 2, 3], 1.0)])
    with pytest.raises(BrokenPath):
        flow_from_paths(p4, [([0], 1.0)])
    with pytest.raises(WeightsNotNormalized):
        flow_from_paths(p4, [([0, 1, 2, 3], 0.5)])


def test_duality_sandwich(corpus: list[Network]) -> None:
    rng = np.random.default_rng(11)
    for net in corpus[:10]:
        A, B = [0], [net.n - 1]
        sol = equilibrium(net, A, B)
        C = sol.capacity
        G = nx.Graph()
        G.add_weighted_edges_from(net.edges())
        path = flow_from_paths(net, [(nx.shortest_path(G, 0, net.n - 1), 1.0)])
        assert thomson_lower_bound(net, A, B, sol.unitary_current) == pytest.approx(C, rel=1e-10)
        assert dirichlet_upper_bound(net, A, B, sol.V) == pytest.approx(C, rel=1e-10)
        for _ in range(5):
            f = rng.random(net.n)
            f[0], f[-1] = 1.0, 0.0
            assert dirichlet_upper_bound(net, A, B, f) >= C * (1 - 1e-12)
            t = float(rng.random())
            other = sol.unitary_current * t + path * (1.0 - t)
            assert thomson_lower_bound(net, A, B, other) <= C * (1 + 1e-12)
