from __future__ import annotations

import numpy as np
import pytest

from ohmic_cli.errors import BadDimension, DomainError, SizeLimit
from ohmic_cli.flow import check_unitary, dirichlet_energy, energy
from ohmic_cli.lattice import (
    box_network,
    capacity_sequence,
    lattice_experiment,
    lattice_row,
    log_test_bound,
    log_test_function,
    origin_capacity,
    radial_flow,
    radial_flow_energy,
)


def test_box_layout() -> None:
    box = box_network(2, 1)
    assert box.network.n == 10
    assert box.interior_count == 9
    assert box.network.label(box.origin) == "0,0"
    assert box.network.label(box.boundary) == "boundary"
    assert box.network.mu[:-1] == pytest.approx(np.ones(9))
    assert box.network.mu[-1] == pytest.approx(3.0)
    assert box.network.loops[-1] == 0.0


def test_box_validation() -> None:
    with pytest.raises(BadDimension):
        box_network(4, 2)
    with pytest.raises(DomainError):
        box_network(2, 0)
    with pytest.raises(SizeLimit):
        box_network(3, 40)


@pytest.mark.parametrize("n", [1, 2, 5, 10])
def test_line_capacity(n: int) -> None:
    assert origin_capacity(box_network(1, n)) == pytest.approx(1.0 / (n + 1), rel=1e-12)


def test_radial_flow_on_line_is_the_current() -> None:
    assert radial_flow_energy(7, 1) == pytest.approx(8.0, rel=1e-12)


def test_log_test_function() -> None:
    f = log_test_function(1)
    box = box_network(2, 1)
    assert f[box.origin] == 1.0
    assert f[box.boundary] == 0.0
    assert dirichlet_energy(box.network, f) == pytest.approx(1.0)
    assert log_test_bound(1) == pytest.approx(7.0481, abs=1e-3)
    assert log_test_bound(10) == pytest.approx(1.1818, abs=1e-3)


def test_radial_flow_is_unitary() -> None:
    for d in (2, 3):
        box = box_network(d, 3)
        phi = radial_flow(3, d, directions=500, box=box)
        check_unitary(phi, [box.origin], [box.boundary])


def test_two_dimensional_recurrence() -> None:
    seq = capacity_sequence(2, 64, ns=[2, 4, 8, 16, 32, 64], threads=2)
    caps = [c for _, c in seq]
    assert [n for n, _ in seq] == [2, 4, 8, 16, 32, 64]
    assert all(a > b for a, b in zip(caps, caps[1:]))
    for n, c in seq:
        assert c <= log_test_bound(n)


@pytest.mark.parametrize("n", [2, 4, 6, 8, 12])
def test_plane_rows_sandwich_capacity(n: int) -> None:
    row = lattice_row(2, n, directions=2000)
    assert row.upper_bound is not None
    assert row.upper_bound <= log_test_bound(n) * (1 + 1e-10)
    assert row.lower_bound <= row.capacity * (1 + 1e-10)
    assert row.capacity <= row.upper_bound * (1 + 1e-10)


def test_space_rows_have_only_a_flow_bound() -> None:
    row3 = lattice_row(3, 4, directions=2000)
    assert row3.upper_bound is None
    assert 0.0 < row3.lower_bound <= row3.capacity


def test_experiment_keeps_input_order() -> None:
    seen: list[int] = []
    rows = lattice_experiment(1, [5, 2, 3], threads=3, on_done=lambda r: seen.append(r.n))
    assert [r.n for r in rows] == [5, 2, 3]
    assert sorted(seen) == [2, 3, 5]
    assert rows[0].capacity == pytest.approx(1 / 6)
    assert rows[0].lower_bound == pytest.approx(1 / 6)


@pytest.mark.slow
def test_three_dimensional_transience() -> None:
    rows = lattice_experiment(3, [4, 8, 12, 16, 20], directions=4000, threads=2)
    for row in rows:
        assert 0.0 < row.lower_bound <= row.capacity * (1 + 1e-9)
    c16, c20 = rows[3].capacity, rows[4].capacity
    assert abs(c16 - c20) / c16 < 0.1


def test_energy_of_radial_flow_matches_direct_sum() -> None:
    box = box_network(2, 2)
    phi = radial_flow(2, 2, directions=64, box=box)
    assert radial_flow_energy(2, 2, directions=64) == pytest.approx(energy(box.network, phi))
