from __future__ import annotations

from pathlib import Path

import pytest

from ohmic_cli.network import Network, build_network, lazy, random_network


@pytest.fixture
def p4() -> Network:
    """Path 0-1-2-3 with unit conductances."""
    return build_network([("0", "1", 1.0), ("1", "2", 1.0), ("2", "3", 1.0)])


@pytest.fixture
def t3() -> Network:
    """Triangle a, b, c with unit conductances (also K3)."""
    return build_network([("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 1.0)])


@pytest.fixture
def k2() -> Network:
    return build_network([("a", "b", 5.0)])


@pytest.fixture
def lazy_k2() -> Network:
    return lazy(build_network([("a", "b", 1.0)]))


@pytest.fixture
def lazy_p4(p4: Network) -> Network:
    return lazy(p4)


@pytest.fixture(scope="session")
def corpus() -> list[Network]:
    """Seeded random connected networks, 5 to 60 nodes."""
    return [random_network(5 + (7 * seed) % 56, seed) for seed in range(25)]


@pytest.fixture(scope="session")
def small_corpus() -> list[Network]:
    """Networks small enough for exhaustive Cheeger search."""
    return [random_network(3 + seed % 10, 1000 + seed, loop_prob=0.3) for seed in range(30)]



@pytest.fixture(scope="session")
def large_corpus() -> list[Network]:
    """Two hundred networks of 5 to 200 nodes."""
    return [random_network(5 + (37 * seed) % 196, 5000 + seed, loop_prob=0.1) for seed in range(200)]


@pytest.fixture(scope="session")
def cheeger_corpus() -> list[Network]:
    """One hundred networks of at most 18 nodes."""
    return [random_network(3 + seed % 16, 9000 + seed, loop_prob=0.3) for seed in range(100)]

@pytest.fixture
def edge_file(tmp_path: Path):
    def _write(text: str, name: str = "net.txt") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
