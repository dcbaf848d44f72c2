from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from ohmic_cli.errors import EmptyTarget, TimeoutExceeded, UsageError, XInTargets
from ohmic_cli.glauber import GlauberParams, metropolis_network
from ohmic_cli.models import CouplingReport, Estimate, EscapeLaw, HittingEstimate
from ohmic_cli.network import Network, NodeSet, as_indices
from ohmic_cli.potential import disjoint_pair, equilibrium, hitting_time_exact

logger = logging.getLogger(__name__)

MAX_STEPS = 10**9


def _streams(seed: int, count: int) -> list[np.random.Generator]:
    """One counter-based generator per trajectory index."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _check_samples(samples: int) -> None:
    if samples < 1:
        raise UsageError(f"samples must be >= 1, got {samples}")


@dataclass(frozen=True, slots=True, eq=False)
class JumpSampler:
    """
    Embedded jump chain with geometric holding times.

    From x the walk stays put for Geometric(q(x)) - 1 steps, q(x) being the
    probability of leaving, then jumps to y with probability c(x,y)/D'(x).
    The step count has exactly the law of the original chain.
    """

    indptr: NDArray[np.int64]
    targets: NDArray[np.int64]
    cumulative: NDArray[np.float64]
    leave: NDArray[np.float64]

    @staticmethod
    def of(net: Network) -> "JumpSampler":
        adj = net.adjacency
        deg = net.offdiag_degree
        cum = np.empty_like(adj.data)
        for x in range(net.n):
            lo, hi = adj.indptr[x], adj.indptr[x + 1]
            row = np.cumsum(adj.data[lo:hi]) / deg[x]
            row[-1] = 1.0
            cum[lo:hi] = row
        return JumpSampler(
            indptr=adj.indptr.astype(np.int64),
            targets=adj.indices.astype(np.int64),
            cumulative=cum,
            leave=np.minimum(deg / net.mu, 1.0),
        )

    def hold(self, rng: np.random.Generator, x: int) -> int:
        q = self.leave[x]
        return 1 if q >= 1.0 else int(rng.geometric(q))

    def jump(self, rng: np.random.Generator, x: int) -> int:
        lo, hi = self.indptr[x], self.indptr[x + 1]
        k = int(np.searchsorted(self.cumulative[lo:hi], rng.random(), side="right"))
        return int(self.targets[lo + min(k, hi - lo - 1)])


def _start(rng: np.random.Generator, start: int | NDArray[np.float64]) -> int:
    if isinstance(start, (int, np.integer)):
        return int(start)
    return int(rng.choice(len(start), p=start))


def _start_law(net: Network, start: int | ArrayLike) -> int | NDArray[np.float64]:
    if isinstance(start, (int, np.integer)):
        as_indices([int(start)], net.n)
        return int(start)
    p = np.asarray(start, dtype=float)
    if p.shape != (net.n,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise UsageError("start distribution must be a probability vector over the nodes")
    return p / p.sum()


def _run_to(
    sampler: JumpSampler,
    rng: np.random.Generator,
    x: int,
    in_b: NDArray[np.bool_],
    max_steps: int,
    in_a: NDArray[np.bool_] | None = None,
    edge: tuple[int, int] | None = None,
) -> tuple[int, bool, int]:
    """Walk from x until B; returns (steps, A reached first, net crossings of edge)."""
    steps = 0
    a_first = bool(in_a is not None and in_a[x])
    crossings = 0
    while not in_b[x]:
        steps += sampler.hold(rng, x)
        if steps > max_steps:
            raise TimeoutExceeded(f"trajectory exceeded {max_steps} steps", max_steps=max_steps)
        y = sampler.jump(rng, x)
        if edge is not None:
            if (x, y) == edge:
                crossings += 1
            elif (y, x) == edge:
                crossings -= 1
        x = y
        if in_a is not None and not a_first and in_a[x] and not in_b[x]:
            a_first = True
    return steps, a_first, crossings


def simulate_hitting(
    net: Network,
    start: int | ArrayLike,
    A: NodeSet | Iterable[int],
    B: NodeSet | Iterable[int],
    samples: int,
    seed: int,
    *,
    max_steps: int = MAX_STEPS,
) -> HittingEstimate:
    """
    P(tau_A < tau_B) and tau_B from `start` (a node or a distribution).
    Continuous-time readings attach an Exp(1) clock to every step.
    """
    _check_samples(samples)
    a, b = disjoint_pair(net, A, B)
    law = _start_law(net, start)
    in_a = np.zeros(net.n, dtype=bool)
    in_a[a] = True
    in_b = np.zeros(net.n, dtype=bool)
    in_b[b] = True
    sampler = JumpSampler.of(net)
    first = np.zeros(samples)
    steps = np.zeros(samples)
    clock = np.zeros(samples)
    for k, rng in enumerate(_streams(seed, samples)):
        x0 = _start(rng, law)
        n_steps, a_first, _ = _run_to(sampler, rng, x0, in_b, max_steps, in_a=in_a)
        first[k] = 1.0 if a_first else 0.0
        steps[k] = n_steps
        clock[k] = rng.gamma(n_steps) if n_steps > 0 else 0.0
    return HittingEstimate(
        prob_a_first=Estimate.from_samples(first, seed),
        time_to_b=Estimate.from_samples(steps, seed),
        time_to_b_continuous=Estimate.from_samples(clock, seed),
    )


def net_flux(
    net: Network,
    A: NodeSet | Iterable[int],
    B: NodeSet | Iterable[int],
    edge: tuple[int, int],
    samples: int,
    seed: int,
    *,
    max_steps: int = MAX_STEPS,
) -> Estimate:
    """Expected net crossings x -> y of the walk started from nu_A and stopped at tau_B."""
    _check_samples(samples)
    a, b = disjoint_pair(net, A, B)
    x, y = (int(t) for t in edge)
    as_indices([x, y], net.n)
    nu = equilibrium(net, a, b).harmonic_measure
    in_b = np.zeros(net.n, dtype=bool)
    in_b[b] = True
    sampler = JumpSampler.of(net)
    counts = np.zeros(samples)
    for k, rng in enumerate(_streams(seed, samples)):
        x0 = _start(rng, nu)
        _, _, crossings = _run_to(sampler, rng, x0, in_b, max_steps, edge=(x, y))
        counts[k] = crossings
    return Estimate.from_samples(counts, seed)


def escape_time_law(
    model: GlauberParams | Network,
    samples: int,
    seed: int,
    *,
    source: int | None = None,
    target: NodeSet | Iterable[int] | None = None,
    max_steps: int = MAX_STEPS,
    dump: Path | None = None,
) -> EscapeLaw:
    """
    Sampled law of tau_B / E[tau_B] from `source`, against Exp(1).

    For Glauber parameters the source defaults to all minus and the target
    to all plus; E[tau_B] comes from the exact hitting-time solve.
    """
    _check_samples(samples)
    if isinstance(model, GlauberParams):
        net = metropolis_network(model)
        src = 0 if source is None else int(source)
        tgt = as_indices([net.n - 1] if target is None else target, net.n)
    else:
        net = model
        if source is None or target is None:
            raise UsageError("a plain network needs an explicit source and target")
        src = int(source)
        tgt = as_indices(target, net.n)
    if tgt.size == 0:
        raise EmptyTarget("escape target is empty")
    if src in set(tgt.tolist()):
        raise XInTargets(f"source {net.label(src)} already lies in the target")
    mean_exact = hitting_time_exact(net, src, tgt)
    in_b = np.zeros(net.n, dtype=bool)
    in_b[tgt] = True
    sampler = JumpSampler.of(net)
    taus = np.zeros(samples)
    for k, rng in enumerate(_streams(seed, samples)):
        taus[k] = _run_to(sampler, rng, src, in_b, max_steps)[0]
    if dump is not None:
        np.save(dump, taus)
    scaled = taus / mean_exact
    ks = stats.kstest(scaled, "expon")
    quantile = float(np.quantile(taus, 1.0 - np.exp(-1.0)))
    logger.debug("escape law: KS=%.4g, T_B=%.6g, E=%.6g", ks.statistic, quantile, mean_exact)
    return EscapeLaw(
        normalized_samples=scaled,
        mean_exact=mean_exact,
        mean_sampled=float(np.mean(taus)),
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        quantile_time=quantile,
        mean_over_quantile=mean_exact / quantile,
        seed=seed,
    )


def coupling_time(
    net: Network,
    x: int,
    y: int,
    samples: int,
    seed: int,
    *,
    times: Sequence[int] = (1, 5, 10),
    max_steps: int = MAX_STEPS,
) -> CouplingReport:
    """
    Meeting time of two independent copies started at x and y, with the
    empirical tail P(tau_c > t) at the requested times.
    """
    _check_samples(samples)
    as_indices([x, y], net.n)
    taus = np.zeros(samples)
    if x != y:
        P = (net.conductance_matrix().multiply(1.0 / net.mu[:, None])).tocsr()
        indptr, targets = P.indptr, P.indices
        cum = np.empty_like(P.data)
        for z in range(net.n):
            lo, hi = indptr[z], indptr[z + 1]
            row = np.cumsum(P.data[lo:hi])
            row[-1] = 1.0
            cum[lo:hi] = row

        def _step(rng: np.random.Generator, z: int) -> int:
            lo, hi = indptr[z], indptr[z + 1]
            k = int(np.searchsorted(cum[lo:hi], rng.random(), side="right"))
            return int(targets[lo + min(k, hi - lo - 1)])

        for k, rng in enumerate(_streams(seed, samples)):
            p, q, t = int(x), int(y), 0
            while p != q:
                t += 1
                if t > max_steps:
                    raise TimeoutExceeded(f"chains from {x} and {y} did not meet within {max_steps} steps")
                p, q = _step(rng, p), _step(rng, q)
            taus[k] = t
    tail = {int(t): float(np.mean(taus > t)) for t in times}
    return CouplingReport(estimate=Estimate.from_samples(taus, seed), tail=tail)
