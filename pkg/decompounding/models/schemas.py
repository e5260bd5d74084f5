"""Pydantic models for the decompounding toolkit."""

import hashlib
import math
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# Enums
class ComponentKind(str, Enum):
    """Family of a mixture component."""
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


class TuneOn(str, Enum):
    """Sample size the resolution and threshold rules are computed from."""
    N_T = "N_T"
    N_T_M = "N_T_m"


class ExportFormat(str, Enum):
    """Report export formats."""
    CSV = "csv"
    JSON = "json"


# Base class for models that carry numpy arrays
class ArrayModel(BaseModel):
    """Immutable value type holding numpy arrays."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# Jump density models
_REQUIRED_PARAMS = {
    ComponentKind.GAUSSIAN: ("mean", "stdev"),
    ComponentKind.LAPLACE: ("location", "scale"),
}


class MixtureComponent(BaseModel):
    """One weighted component of a jump density."""
    kind: ComponentKind
    params: dict[str, float]
    weight: float = Field(..., ge=0, le=1)

    @model_validator(mode="after")
    def _check_params(self) -> "MixtureComponent":
        location_key, spread_key = _REQUIRED_PARAMS[self.kind]
        missing = [k for k in (location_key, spread_key) if k not in self.params]
        if missing:
            raise ValueError(f"{self.kind.value} component needs params {missing}")
        if not all(math.isfinite(v) for v in self.params.values()):
            raise ValueError("component params must be finite")
        if self.params[spread_key] <= 0:
            raise ValueError(f"{spread_key} must be positive")
        return self

    @property
    def location(self) -> float:
        return self.params[_REQUIRED_PARAMS[self.kind][0]]

    @property
    def spread(self) -> float:
        """Standard deviation (Gaussian) or scale b (Laplace)."""
        return self.params[_REQUIRED_PARAMS[self.kind][1]]


class JumpDensityModel(BaseModel):
    """Analytic jump density: a finite mixture of Gaussian and Laplace laws."""
    components: list[MixtureComponent] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_weights(self) -> "JumpDensityModel":
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights sum to {total}, expected 1")
        return self

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @classmethod
    def gaussian(cls, mean: float = 0.0, stdev: float = 1.0) -> "JumpDensityModel":
        return cls(components=[MixtureComponent(
            kind=ComponentKind.GAUSSIAN, params={"mean": mean, "stdev": stdev}, weight=1.0,
        )])

    @classmethod
    def laplace(cls, location: float = 0.0, scale: float = 1.0) -> "JumpDensityModel":
        return cls(components=[MixtureComponent(
            kind=ComponentKind.LAPLACE, params={"location": location, "scale": scale}, weight=1.0,
        )])

    @classmethod
    def gaussian_laplace_mixture(cls, a: float = 0.05) -> "JumpDensityModel":
        """(1-a) N(0,1) + a Laplace(1, 0.1)."""
        return cls(components=[
            MixtureComponent(kind=ComponentKind.GAUSSIAN, params={"mean": 0.0, "stdev": 1.0}, weight=1.0 - a),
            MixtureComponent(kind=ComponentKind.LAPLACE, params={"location": 1.0, "scale": 0.1}, weight=a),
        ])


# Observations
class ObservationRecord(ArrayModel):
    """A compound Poisson path observed on the Δ-grid, with its latent jumps."""
    delta: float = Field(..., gt=0, description="Sampling step Δ")
    horizon: float = Field(..., gt=0, description="Observation horizon T")
    intensity_true: float = Field(..., ge=0, description="Intensity ϑ used for simulation")
    increments: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    jump_counts: np.ndarray = Field(..., description="Latent number of jumps per slot")

    @property
    def n_slots(self) -> int:
        return int(self.increments.size)

    @property
    def jumps(self) -> list[tuple[float, float]]:
        return list(zip(self.jump_times.tolist(), self.jump_sizes.tolist()))

    def checksum(self) -> str:
        """SHA-256 of the increment bytes."""
        return hashlib.sha256(np.ascontiguousarray(self.increments, dtype=np.float64).tobytes()).hexdigest()


class NonzeroIncrements(ArrayModel):
    """Nonzero increments in occurrence order."""
    values: np.ndarray
    total_slots: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_values(self) -> "NonzeroIncrements":
        if self.values.size > self.total_slots:
            raise ValueError("more nonzero increments than observation slots")
        if np.any(self.values == 0):
            raise ValueError("nonzero increments contain zeros")
        return self

    @property
    def count(self) -> int:
        """N_T."""
        return int(self.values.size)


# Wavelet layer
class Interval(BaseModel):
    """Closed interval [lo, hi]."""
    model_config = ConfigDict(frozen=True)

    lo: float
    hi: float

    @model_validator(mode="after")
    def _check_bounds(self) -> "Interval":
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError(f"degenerate interval [{self.lo}, {self.hi}]")
        return self

    @property
    def width(self) -> float:
        return self.hi - self.lo


class WaveletBasis(BaseModel):
    """Orthogonal scaling/wavelet filter pair."""
    model_config = ConfigDict(frozen=True)

    name: str = "sym4"
    lowpass: list[float]
    highpass: list[float]
    sup_norm_bound: float = Field(..., gt=0, description="Estimate of the sup norm of psi")
    vanishing_moments: int = Field(..., ge=1)

    @property
    def filter_length(self) -> int:
        return len(self.lowpass)


class BinnedSample(ArrayModel):
    """Samples linearly binned on the 2^L bin centres of the domain."""
    domain: Interval
    level_L: int = Field(..., ge=1)
    counts: np.ndarray
    n_samples: int = Field(..., ge=0, description="In-domain samples, equal to sum(counts)")
    n_dropped: int = Field(default=0, ge=0, description="Samples outside the domain")

    @property
    def n_bins(self) -> int:
        return 2 ** self.level_L

    @property
    def n_total(self) -> int:
        return self.n_samples + self.n_dropped

    @property
    def bin_width(self) -> float:
        return self.domain.width / self.n_bins

    @property
    def centers(self) -> np.ndarray:
        return self.domain.lo + (np.arange(self.n_bins) + 0.5) * self.bin_width


class WaveletCoefficients(ArrayModel):
    """Coefficients of a density in the periodized orthonormal basis of L2(D)."""
    domain: Interval
    level_L: int = Field(..., ge=1)
    coarse_level: int = Field(..., ge=0)
    alpha0: np.ndarray
    betas: dict[int, np.ndarray] = Field(default_factory=dict)
    max_level_J: int = Field(..., ge=0)

    @property
    def bin_width(self) -> float:
        return self.domain.width / 2 ** self.level_L


class EstimationDiagnostics(BaseModel):
    """Tuning quantities and warnings recorded while estimating."""
    n_nonzero: int
    p_hat: Optional[float] = None
    theta_hat: Optional[float] = None
    J_effective: list[int] = Field(default_factory=list)
    eta: list[float] = Field(default_factory=list)
    K: Optional[int] = None
    warnings: list[str] = Field(default_factory=list)


class DensityEstimate(ArrayModel):
    """Density values on the uniform grid lo, lo+step, ..., hi."""
    domain: Interval
    step: float = Field(default=0.01, gt=0)
    values: np.ndarray
    diagnostics: Optional[EstimationDiagnostics] = None

    @model_validator(mode="after")
    def _check_length(self) -> "DensityEstimate":
        expected = grid_size(self.domain, self.step)
        if self.values.size != expected:
            raise ValueError(f"expected {expected} grid values, got {self.values.size}")
        return self

    @property
    def grid(self) -> np.ndarray:
        return self.domain.lo + self.step * np.arange(self.values.size)


def grid_size(domain: Interval, step: float) -> int:
    """Number of mesh points lo, lo+step, ..., hi."""
    return int(round(domain.width / step)) + 1


# Decompounding
class CompoundingWeights(ArrayModel):
    """p_m(Δ) = P(R_Δ = m | R_Δ ≠ 0) for m = 1..M."""
    theta: float
    delta: float
    weights: np.ndarray

    @property
    def truncation(self) -> int:
        return int(self.weights.size)

    @property
    def tail_mass(self) -> float:
        """Sum of p_m over m > M, continued by the ratio recursion."""
        x = self.theta * self.delta
        term = float(self.weights[-1])
        tail = 0.0
        m = self.truncation
        while term > 0.0 and m < self.truncation + 10_000:
            term *= x / (m + 1)
            tail += term
            m += 1
            if term < tail * 1e-17:
                break
        return tail


class InverseCoefficients(ArrayModel):
    """Coefficients a_1..a_{K+1} of the order-K truncated inverse."""
    theta_hat: float
    delta: float
    order_K: int = Field(..., ge=0)
    a: np.ndarray
    warnings: list[str] = Field(default_factory=list)


class IntensityEstimate(BaseModel):
    """Plug-in estimate of the jump intensity."""
    p_hat: float = Field(..., ge=0, lt=1)
    theta_hat: float = Field(..., ge=0)
    n_nonzero: int = Field(..., ge=0)
    n_slots: int = Field(..., ge=1)
    clamped: bool = False


class RateExponent(BaseModel):
    """Minimax rate exponent and the active branch."""
    value: float
    branch: Literal["dense", "sparse"]


# Grid oracles
class GridFunction(ArrayModel):
    """Real function tabulated on lo, lo+step, ..."""
    lo: float
    step: float = Field(..., gt=0)
    values: np.ndarray

    @field_validator("values")
    @classmethod
    def _check_finite(cls, values: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        return values

    @property
    def hi(self) -> float:
        return self.lo + self.step * (self.values.size - 1)

    @property
    def grid(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.values.size)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.step)


class CompoundedGrid(BaseModel):
    """Truncated compounding of a grid density."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    density: GridFunction
    deficit: float = Field(..., description="1 - sum of the weights kept")


# Experiment harness

# Mean L2 losses of the reference study over 1000 replicates
REFERENCE_STUDY_LOSSES = {"oracle": 0.1117e-4, "K0": 0.1842e-4, "K1": 0.1353e-4, "K2": 0.1350e-4, "K3": 0.1350e-4}


class ExperimentConfig(BaseModel):
    """Monte Carlo experiment definition."""
    theta: float = Field(..., ge=0)
    delta: float = Field(..., gt=0)
    horizon_T: float = Field(..., gt=0)
    model: JumpDensityModel
    K_list: list[int] = Field(..., min_length=1)
    kappa: float = Field(default=1.0, gt=0)
    L: int = Field(default=8, ge=1, le=16)
    J: int = Field(default=10, ge=0, description="Requested resolution before the cap")
    domain: Interval = Field(default_factory=lambda: Interval(lo=-6.0, hi=6.0))
    grid_step: float = Field(default=0.01, gt=0)
    replicates_M: int = Field(default=1000, ge=1)
    master_seed: int = Field(default=0, ge=0)
    tune_on: TuneOn = TuneOn.N_T
    reference_losses: Optional[dict[str, float]] = Field(
        default=None, description="Mean L2 losses of an earlier run of the same study, keyed by estimator name",
    )

    @field_validator("K_list")
    @classmethod
    def _check_orders(cls, K_list: list[int]) -> list[int]:
        if any(K < 0 for K in K_list):
            raise ValueError("correction orders must be nonnegative")
        if len(set(K_list)) != len(K_list):
            raise ValueError("correction orders must be distinct")
        return sorted(K_list)

    @model_validator(mode="after")
    def _check_sampling(self) -> "ExperimentConfig":
        if self.delta > self.horizon_T:
            raise ValueError("delta must not exceed the horizon")
        return self

    @classmethod
    def reference_study(cls, **overrides) -> "ExperimentConfig":
        """Reference Monte Carlo study: ϑ=1, Δ=0.1, T=10^4, K=0..3, M=1000."""
        values = dict(
            theta=1.0, delta=0.1, horizon_T=10_000.0, model=JumpDensityModel.gaussian_laplace_mixture(),
            K_list=[0, 1, 2, 3], kappa=1.0, L=8, J=10, grid_step=0.01, replicates_M=1000,
            reference_losses=dict(REFERENCE_STUDY_LOSSES),
        )
        values.update(overrides)
        return cls(**values)

    @property
    def estimator_names(self) -> list[str]:
        return ["oracle"] + [f"K{K}" for K in self.K_list]


class ReplicateRecord(BaseModel):
    """Outcome of one replicate; all estimators share one trajectory."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    ok: bool
    failure: Optional[str] = None
    path_checksum: str
    n_nonzero: int
    n_jumps: int
    theta_hat: Optional[float] = None
    J_effective: Optional[int] = None
    eta: Optional[float] = None
    losses: dict[str, float] = Field(default_factory=dict)
    jump_count_tally: dict[int, int] = Field(default_factory=dict)
    warnings: list[str] = Field(default_factory=list)
    curves: Optional[dict[str, np.ndarray]] = Field(default=None, exclude=True)


class EstimatorSummary(BaseModel):
    """Loss statistics of one estimator over the successful replicates."""
    name: str
    mean_l2: float
    sd_l2: float
    se_l2: float
    n_ok: int
    n_failed: int
    losses: list[float]


class PmEstimate(BaseModel):
    """Monte Carlo frequency of m jumps among nonzero increments."""
    m: int
    mean: float
    sd: float
    se: float


class PairedComparison(BaseModel):
    """Paired loss difference between two estimators (first minus second)."""
    first: str
    second: str
    mean_difference: float
    se_difference: float


class ExperimentReport(BaseModel):
    """Monte Carlo summary of an experiment."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: ExperimentConfig
    estimators: list[EstimatorSummary]
    pm_estimates: list[PmEstimate]
    comparisons: list[PairedComparison] = Field(default_factory=list)
    replicates: list[ReplicateRecord]
    n_ok: int
    n_failed: int
    sd_defined: bool = True
    J_effective_min: int
    J_effective_max: int
    eta_mean: float
    oracle_ratios: dict[str, float] = Field(default_factory=dict)
    notes: list[str] = Field(default_factory=list)
    grid: Optional[np.ndarray] = Field(default=None, exclude=True)
    mae_curves: Optional[dict[str, np.ndarray]] = Field(default=None, exclude=True)
    example_curves: Optional[dict[str, np.ndarray]] = Field(default=None, exclude=True)
    elapsed_seconds: Optional[float] = Field(default=None, exclude=True)

    def estimator(self, name: str) -> EstimatorSummary:
        for summary in self.estimators:
            if summary.name == name:
                return summary
        raise KeyError(name)
