from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

import numpy as np


def plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers to JSON-ready values."""
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if hasattr(value, "to_dict"):
        return value.to_dict()
    return value


class _Report:
    __slots__ = ()

    def to_dict(self) -> dict[str, Any]:
        return {f.name: plain(getattr(self, f.name)) for f in fields(self)}  # type: ignore[arg-type]


@dataclass(frozen=True, slots=True)
class Estimate(_Report):
    mean: float
    stderr: float
    samples: int
    seed: int

    @staticmethod
    def from_samples(values: np.ndarray, seed: int) -> "Estimate":
        arr = np.asarray(values, dtype=float)
        n = int(arr.size)
        mean = float(np.mean(arr)) if n else float("nan")
        stderr = float(np.std(arr, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return Estimate(mean=mean, stderr=stderr, samples=n, seed=seed)


@dataclass(frozen=True, slots=True, eq=False)
class SpectrumReport(_Report):
    eigenvalues: np.ndarray
    gap: float
    lambda_bar: float
    periodic: bool
    complete: bool
    second_eigenvector: np.ndarray
    normalization: str = "probability"


@dataclass(frozen=True, slots=True)
class CheegerResult(_Report):
    constant: float
    subset: tuple[int, ...]
    mass: float


@dataclass(frozen=True, slots=True)
class PoincareBound(_Report):
    scheme: str
    bound: float
    bottleneck: tuple[int, int]


@dataclass(frozen=True, slots=True)
class MixingReport(_Report):
    mixing_time: float
    gap: float
    lower_bound: float
    upper_bound: float
    log_gap_product: float | None


@dataclass(frozen=True, slots=True)
class LatticeRow(_Report):
    d: int
    n: int
    capacity: float
    upper_bound: float | None
    lower_bound: float | None
    wall_time_ms: float


@dataclass(frozen=True, slots=True)
class HittingEstimate(_Report):
    prob_a_first: Estimate
    time_to_b: Estimate
    time_to_b_continuous: Estimate


@dataclass(frozen=True, slots=True, eq=False)
class EscapeLaw(_Report):
    normalized_samples: np.ndarray
    mean_exact: float
    mean_sampled: float
    ks_statistic: float
    ks_pvalue: float
    quantile_time: float
    mean_over_quantile: float
    seed: int


@dataclass(frozen=True, slots=True)
class CouplingReport(_Report):
    estimate: Estimate
    tail: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class LandscapeReport(_Report):
    L: int
    J: float
    h: float
    a: int
    b: int
    energy_a: float
    energy_b: float
    communication_height: float
    gamma: float
    critical_length: int
    cycle_a: tuple[int, ...]
    cycle_b: tuple[int, ...]
    gate: tuple[int, ...]
    gate_count: int
    droplet_count: int
    gate_count_formula: int
    deepest_other_well: float
    b_is_ground_state: bool

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: plain(getattr(self, f.name)) for f in fields(self)}
        # membership lists are large; counts are what reports carry
        d["cycle_a"] = len(self.cycle_a)
        d["cycle_b"] = len(self.cycle_b)
        return d


@dataclass(frozen=True, slots=True)
class NucleationReport(_Report):
    beta: float
    exact_mean_formula: float
    exact_mean_direct: float
    harmonic_start_direct: float
    formula_ratio: float
    predicted: float
    predicted_ratio: float
    log_slope: float
    capacity_full: float
    capacity_reduced: float
    capacity_ratio: float


@dataclass(frozen=True, slots=True)
class RunConfig(_Report):
    command: str
    inputs: tuple[str, ...] = ()
    output: str | None = None
    options: dict[str, Any] = field(default_factory=dict)
    format: str = "json"
