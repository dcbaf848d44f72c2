from __future__ import annotations

import math

import numpy as np
import pytest

from ohmic_cli.errors import DegenerateRatio, DomainError, SizeLimit
from ohmic_cli.glauber import (
    GlauberParams,
    SpinConfig,
    all_energies,
    communication_height,
    critical_length,
    exact_nucleation_time,
    flip_edges,
    glauber_sweep,
    hamiltonian,
    landscape,
    metropolis_network,
    predicted_nucleation_time,
    symmetry_orbits,
)
from ohmic_cli.network import transition_kernel
from ohmic_cli.potential import equilibrium, hitting_times
from ohmic_cli.spectral import mixing_time, potential_gap_upper, spectral_gap


def _dense_metropolis(params: GlauberParams) -> np.ndarray:
    H = all_energies(params)
    N = params.sites
    size = 1 << N
    P = np.zeros((size, size))
    for x in range(size):
        for k in range(N):
            y = x ^ (1 << k)
            P[x, y] = math.exp(-params.beta * max(0.0, H[y] - H[x])) / N
        P[x, x] = 1.0 - P[x].sum()
    return P


def test_critical_length() -> None:
    assert critical_length(1.0, 1.4) == 2
    assert critical_length(1.0, 0.75) == 3
    with pytest.raises(DegenerateRatio):
        critical_length(1.0, 2.0)
    with pytest.raises(DegenerateRatio):
        GlauberParams(L=4, J=1.0, h=1.0)
    with pytest.raises(DomainError):
        GlauberParams(L=1, J=1.0, h=1.4)


def test_energies_on_four_by_four() -> None:
    params = GlauberParams(L=4, J=1.0, h=1.4)
    H = all_energies(params)
    assert H[0] == pytest.approx(-4.8)
    assert H[-1] == pytest.approx(-27.2)
    assert H[1] - H[0] == pytest.approx(2.6)
    minus = SpinConfig.from_spins(-np.ones((4, 4), dtype=int))
    assert minus.index == 0
    assert hamiltonian(params, minus) == pytest.approx(-4.8)
    assert hamiltonian(params, minus.flip(5)) == pytest.approx(H[1 << 5])
    assert minus.flip(5).spins()[1, 1] == 1


def test_exact_mode_is_bounded() -> None:
    params = GlauberParams(L=5, J=1.0, h=1.4)
    with pytest.raises(SizeLimit):
        all_energies(params)
    with pytest.raises(SizeLimit):
        landscape(params)


def test_metropolis_matches_dense_kernel() -> None:
    params = GlauberParams(L=2, J=1.0, h=1.4, beta=1.3)
    net = metropolis_network(params)
    P = _dense_metropolis(params)
    assert transition_kernel(net).toarray() == pytest.approx(P, abs=1e-12)
    assert net.mu.sum() == pytest.approx(1.0)
    H = all_energies(params)
    gibbs = np.exp(-params.beta * H)
    assert net.mu == pytest.approx(gibbs / gibbs.sum())


def test_nucleation_time_matches_brute_force() -> None:
    params = GlauberParams(L=2, J=1.0, h=1.4, beta=1.0)
    P = _dense_metropolis(params)
    b = 15
    keep = [x for x in range(16) if x != b]
    h = np.linalg.solve(np.eye(15) - P[np.ix_(keep, keep)], np.ones(15))
    rep = exact_nucleation_time(params)
    assert rep.exact_mean_direct == pytest.approx(h[0] / 4, rel=1e-9)


def test_symmetry_orbits() -> None:
    orbits = symmetry_orbits(3)
    assert orbits[0] == 0
    assert orbits[511] == 511
    singles = {int(orbits[1 << k]) for k in range(9)}
    assert singles == {1}
    assert len(np.unique(orbits)) < 512 // 8


def test_three_by_three_landscape() -> None:
    params = GlauberParams(L=3, J=1.0, h=1.4)
    rep = landscape(params)
    assert rep.gamma == pytest.approx(3.2, abs=1e-12)
    assert rep.critical_length == 2
    assert rep.gate_count == 18
    assert rep.b_is_ground_state
    assert communication_height(params, 0, 511) == pytest.approx(rep.energy_a + 3.2)
    assert rep.deepest_other_well < rep.gamma


def test_lumped_solves_agree_with_full_network() -> None:
    params = GlauberParams(L=3, J=1.0, h=1.4, beta=1.5)
    rep = landscape(params)
    exact = exact_nucleation_time(params, rep)
    net = metropolis_network(params)
    assert exact.exact_mean_direct == pytest.approx(hitting_times(net, [511])[0] / 9, rel=1e-8)
    full = equilibrium(net, list(rep.cycle_a), list(rep.cycle_b))
    assert exact.capacity_full == pytest.approx(full.capacity, rel=1e-8)
    assert exact.exact_mean_formula == pytest.approx(exact.harmonic_start_direct, rel=1e-8)
    assert exact.capacity_ratio >= 1.0 - 1e-9


def test_flip_edges_cover_the_hypercube() -> None:
    u, v = flip_edges(2)
    assert len(u) == 4 * 8
    assert np.all(u < v)
    step = v - u
    assert np.all(step & (step - 1) == 0)


@pytest.mark.slow
def test_four_by_four_landscape() -> None:
    params = GlauberParams(L=4, J=1.0, h=1.4)
    rep = landscape(params)
    assert rep.gamma == pytest.approx(3.8, abs=1e-12)
    assert rep.critical_length == 2
    assert rep.gate_count_formula == 128
    assert rep.gate_count == 96
    assert rep.droplet_count == 64
    assert rep.b_is_ground_state
    assert rep.deepest_other_well < rep.gamma
    assert predicted_nucleation_time(params.with_beta(2.0), rep) == pytest.approx(math.exp(7.6) / 64, rel=1e-12)


@pytest.mark.slow
def test_four_by_four_sweep_trends() -> None:
    params = GlauberParams(L=4, J=1.0, h=1.4)
    rep, sweep = glauber_sweep(params, [4.0, 5.0, 6.0, 8.0], threads=2)
    assert [r.beta for r in sweep] == [4.0, 5.0, 6.0, 8.0]
    offsets = [abs(r.log_slope - rep.gamma) for r in sweep]
    assert all(a > b for a, b in zip(offsets, offsets[1:]))
    ratios = [r.capacity_ratio for r in sweep]
    assert all(r >= 1.0 - 1e-9 for r in ratios)
    assert all(a >= b - 1e-9 for a, b in zip(ratios, ratios[1:]))


@pytest.mark.slow
def test_slope_at_beta_six_after_prefactor() -> None:
    params = GlauberParams(L=4, J=1.0, h=1.4, beta=6.0)
    rep = landscape(params)
    res = exact_nucleation_time(params, rep)
    prefactor = res.predicted / math.exp(rep.gamma * params.beta)
    corrected = res.log_slope - math.log(prefactor) / params.beta
    assert abs(corrected - rep.gamma) <= 0.05 * rep.gamma


@pytest.mark.slow
def test_three_by_three_gap_against_hitting_and_mixing() -> None:
    params = GlauberParams(L=3, J=1.0, h=1.4, beta=4.0)
    rep = landscape(params)
    net = metropolis_network(params)
    gap = spectral_gap(net)
    assert potential_gap_upper(net, list(rep.cycle_a), list(rep.cycle_b)) >= gap * (1 - 1e-8)
    assert potential_gap_upper(net, [rep.a], [rep.b]) >= gap * (1 - 1e-8)
    mixing = mixing_time(net)
    assert mixing.lower_bound <= mixing.mixing_time * (1 + 1e-8)
    assert mixing.mixing_time <= mixing.upper_bound * (1 + 1e-8)
    steps = exact_nucleation_time(params, rep).exact_mean_direct * params.sites
    assert 0.1 <= mixing.mixing_time / steps <= 10.0
