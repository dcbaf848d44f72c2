from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from ohmic_cli.errors import EmptyTarget, TimeoutExceeded, UsageError, XInTargets
from ohmic_cli.glauber import GlauberParams, exact_nucleation_time
from ohmic_cli.mc import coupling_time, escape_time_law, net_flux, simulate_hitting
from ohmic_cli.network import Network, build_network, lazy, random_network
from ohmic_cli.potential import equilibrium, hitting_times
from ohmic_cli.spectral import pairwise_total_variation


def _close(est, exact: float, k: float = 4.0) -> bool:
    return abs(est.mean - exact) <= k * est.stderr + 1e-12


def test_hitting_on_path(p4: Network) -> None:
    est = simulate_hitting(p4, 1, [0], [3], 4000, seed=1)
    assert _close(est.prob_a_first, 2 / 3)
    assert _close(est.time_to_b, 8.0)
    assert _close(est.time_to_b_continuous, 8.0)
    assert est.time_to_b.samples == 4000


def test_hitting_from_inside_a(p4: Network) -> None:
    est = simulate_hitting(p4, 0, [0], [3], 2000, seed=2)
    assert est.prob_a_first.mean == 1.0
    assert _close(est.time_to_b, 9.0)


def test_hitting_from_harmonic_measure(p4: Network) -> None:
    nu = equilibrium(p4, [0], [3]).harmonic_measure
    est = simulate_hitting(p4, nu, [0], [3], 2000, seed=3)
    assert _close(est.time_to_b, 9.0)
    with pytest.raises(UsageError):
        simulate_hitting(p4, [0.5, 0.2, 0.0, 0.0], [0], [3], 10, seed=3)


def test_same_seed_same_estimate(t3: Network) -> None:
    first = simulate_hitting(t3, 2, [0], [1], 300, seed=42)
    again = simulate_hitting(t3, 2, [0], [1], 300, seed=42)
    other = simulate_hitting(t3, 2, [0], [1], 300, seed=43)
    assert first.to_dict() == again.to_dict()
    assert first.time_to_b.mean != other.time_to_b.mean


def test_sampling_guards(p4: Network) -> None:
    with pytest.raises(UsageError):
        simulate_hitting(p4, 1, [0], [3], 0, seed=0)
    with pytest.raises(TimeoutExceeded):
        simulate_hitting(p4, 0, [0], [3], 5, seed=0, max_steps=1)


def test_flux_through_a_cut_edge_is_exact(p4: Network) -> None:
    est = net_flux(p4, [0], [3], (1, 2), 500, seed=5)
    assert est.mean == 1.0
    assert est.stderr == 0.0
    assert net_flux(p4, [0], [3], (2, 1), 200, seed=5).mean == -1.0


def test_flux_matches_unit_current(t3: Network) -> None:
    est = net_flux(t3, [0], [1], (0, 1), 4000, seed=6)
    assert _close(est, 2 / 3)
    side = net_flux(t3, [0], [1], (0, 2), 4000, seed=7)
    assert _close(side, 1 / 3)


def test_escape_law_of_a_sticky_node() -> None:
    net = build_network([("a", "a", 99.0), ("a", "b", 1.0)])
    law = escape_time_law(net, 2000, seed=8, source=0, target=[1])
    assert law.mean_exact == pytest.approx(100.0)
    assert law.ks_statistic < 0.06
    assert law.mean_over_quantile == pytest.approx(1.0, abs=0.1)
    assert law.normalized_samples.shape == (2000,)


def test_escape_law_validation(p4: Network) -> None:
    with pytest.raises(UsageError):
        escape_time_law(p4, 10, seed=0)
    with pytest.raises(XInTargets):
        escape_time_law(p4, 10, seed=0, source=3, target=[3])
    with pytest.raises(EmptyTarget):
        escape_time_law(p4, 10, seed=0, source=0, target=[])


def test_glauber_escape_uses_exact_mean(tmp_path: Path) -> None:
    params = GlauberParams(L=2, J=1.0, h=1.4, beta=1.0)
    dump = tmp_path / "taus.npy"
    law = escape_time_law(params, 200, seed=9, dump=dump)
    exact = exact_nucleation_time(params).exact_mean_direct * params.sites
    assert law.mean_exact == pytest.approx(exact, rel=1e-8)
    taus = np.load(dump)
    assert taus.shape == (200,)
    assert law.mean_sampled == pytest.approx(float(taus.mean()))


def test_coupling_of_lazy_pair(lazy_k2: Network) -> None:
    rep = coupling_time(lazy_k2, 0, 1, 4000, seed=10)
    assert _close(rep.estimate, 2.0)
    assert rep.tail[1] == pytest.approx(0.5, abs=0.05)
    assert rep.tail[10] < 0.01
    same = coupling_time(lazy_k2, 1, 1, 10, seed=10)
    assert same.estimate.mean == 0.0
    assert same.tail == {1: 0.0, 5: 0.0, 10: 0.0}



def test_coupling_tail_dominates_total_variation(lazy_p4: Network) -> None:
    samples = 4000
    rep = coupling_time(lazy_p4, 0, 3, samples, seed=12, times=[1, 2, 5, 10])
    for t, tail in rep.tail.items():
        slack = 4.0 * np.sqrt(tail * (1.0 - tail) / samples) + 1e-3
        assert tail + slack >= pairwise_total_variation(lazy_p4, 0, 3, t)
    net = lazy(random_network(8, 13))
    rep = coupling_time(net, 0, 7, samples, seed=14, times=[1, 3, 6])
    for t, tail in rep.tail.items():
        slack = 4.0 * np.sqrt(tail * (1.0 - tail) / samples) + 1e-3
        assert tail + slack >= pairwise_total_variation(net, 0, 7, t)

def test_periodic_pair_never_meets(k2: Network) -> None:
    with pytest.raises(TimeoutExceeded):
        coupling_time(k2, 0, 1, 5, seed=0, max_steps=50)


@pytest.mark.slow
def test_glauber_escape_becomes_exponential() -> None:
    laws = {
        beta: escape_time_law(GlauberParams(L=3, J=1.0, h=1.4, beta=beta), 10_000, seed=11)
        for beta in (3.0, 4.0, 5.0)
    }
    ks = [laws[beta].ks_statistic for beta in (3.0, 4.0, 5.0)]
    assert ks[0] > ks[1] > ks[2]
    assert laws[5.0].mean_over_quantile == pytest.approx(1.0, abs=0.1)


@pytest.mark.slow
def test_seeded_batch_agrees_with_exact_values() -> None:
    passed = total = 0
    for seed in range(250):
        net = random_network(4 + seed % 9, 20_000 + seed)
        perm = np.random.default_rng(seed).permutation(net.n).tolist()
        A, B, x = perm[:1], perm[1:2], perm[2]
        est = simulate_hitting(net, x, A, B, 400, seed=seed)
        passed += _close(est.prob_a_first, float(equilibrium(net, A, B).V[x]))
        passed += _close(est.time_to_b, float(hitting_times(net, B)[x]))
        total += 2
    assert total == 500
    assert passed >= 495
