"""
Decompounding: inversion of the compounding operator and the corrected estimator.

A nonzero increment has density P_Δ[f] = sum_m p_m(Δ) f^{*m}. Its inverse is the
power series sum_m a_m ν^{*m}; keeping the first K+1 terms and plugging in
wavelet estimates of the convolution powers of P_Δ[f] gives the estimator
corrected at order K.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Optional

import numpy as np

from core.errors import (
    DegenerateEstimateError,
    EmptyInputError,
    InsufficientDataError,
    ParameterError,
)
from models.schemas import (
    CompoundingWeights,
    DensityEstimate,
    EstimationDiagnostics,
    IntensityEstimate,
    Interval,
    InverseCoefficients,
    NonzeroIncrements,
    RateExponent,
    TuneOn,
    WaveletBasis,
)
from services.wavelet import threshold_estimate

logger = logging.getLogger(__name__)

# p_hat is clamped below 1 so that theta_hat stays finite
P_HAT_CEILING = 1.0 - 1e-12

# exp(x) overflows past this
MAX_THETA_DELTA = 700.0


def _check_rate(theta: float, delta: float) -> float:
    for name, value in (("theta", theta), ("delta", delta)):
        if not (math.isfinite(value) and value > 0):
            raise ParameterError(f"{name} must be positive and finite, got {value}")
    x = theta * delta
    if x > MAX_THETA_DELTA:
        raise ParameterError(f"theta*delta={x} is outside the representable range")
    return x


# =============================================================================
# Compounding weights and inverse series
# =============================================================================

def compounding_weights(theta: float, delta: float, truncation: int) -> CompoundingWeights:
    """p_m = (ϑΔ)^m / ((e^{ϑΔ} - 1) m!), m = 1..M, by ratio recursion."""
    x = _check_rate(theta, delta)
    if truncation < 1:
        raise ParameterError(f"truncation must be >= 1, got {truncation}")
    weights = np.empty(truncation)
    weights[0] = x / math.expm1(x)
    for m in range(1, truncation):
        weights[m] = weights[m - 1] * x / (m + 1)
    return CompoundingWeights(theta=theta, delta=delta, weights=weights)


def inverse_coefficients(theta: float, delta: float, order_K: int) -> InverseCoefficients:
    """a_m = (-1)^{m+1} (e^{ϑΔ} - 1)^m / (m ϑΔ), m = 1..K+1."""
    x = _check_rate(theta, delta)
    if order_K < 0:
        raise ParameterError(f"order K must be nonnegative, got {order_K}")
    e = math.expm1(x)
    m = np.arange(1, order_K + 2)
    # (e^m / x) / m, accumulated as a product to stay finite for small x
    magnitude = np.cumprod(np.full(order_K + 1, e))
    a = np.where(m % 2 == 1, 1.0, -1.0) * magnitude / (m * x)

    warnings: list[str] = []
    if e >= 1.0:
        message = (
            f"theta*delta={x:.4g} >= ln 2: the inverse series does not converge, "
            "using the truncated sum anyway"
        )
        logger.warning(message)
        warnings.append(message)
    return InverseCoefficients(theta_hat=theta, delta=delta, order_K=order_K, a=a, warnings=warnings)


# =============================================================================
# Data preparation
# =============================================================================

def group_increments(nonzero: NonzeroIncrements, m: int) -> np.ndarray:
    """
    Sums of m nonzero increments spaced N_{T,m} apart.

    Element i is values[i] + values[N_{T,m} + i] + ... + values[(m-1) N_{T,m} + i];
    the trailing N_T mod m values are unused.
    """
    if m < 1:
        raise ParameterError(f"group size must be >= 1, got {m}")
    n = nonzero.count
    if n < m:
        raise InsufficientDataError(f"{n} nonzero increments cannot form groups of {m}")
    n_groups = n // m
    return nonzero.values[: m * n_groups].reshape(m, n_groups).sum(axis=0)


def intensity_from_fraction(p_hat: float, delta: float, n_nonzero: int = 0, n_slots: int = 1) -> IntensityEstimate:
    """theta_hat = -log(1 - p_hat) / Δ, with p_hat clamped below 1."""
    if not (math.isfinite(delta) and delta > 0):
        raise ParameterError(f"delta must be positive, got {delta}")
    if not 0.0 <= p_hat <= 1.0:
        raise ParameterError(f"fraction must lie in [0, 1], got {p_hat}")
    clamped = p_hat > P_HAT_CEILING
    if clamped:
        logger.warning("Every observation slot is nonzero; clamping p_hat to %r", P_HAT_CEILING)
        p_hat = P_HAT_CEILING
    theta_hat = -math.log1p(-p_hat) / delta
    return IntensityEstimate(
        p_hat=p_hat, theta_hat=theta_hat, n_nonzero=n_nonzero, n_slots=n_slots, clamped=clamped,
    )


def estimate_intensity(nonzero: NonzeroIncrements, delta: float) -> IntensityEstimate:
    """Plug-in intensity from the fraction of nonzero slots."""
    if nonzero.total_slots < 1:
        raise ParameterError("no observation slots")
    if nonzero.count == 0:
        raise DegenerateEstimateError("no nonzero increments: the intensity cannot be estimated")
    return intensity_from_fraction(
        nonzero.count / nonzero.total_slots,
        delta,
        n_nonzero=nonzero.count,
        n_slots=nonzero.total_slots,
    )


# =============================================================================
# Estimators
# =============================================================================

def convolution_power_estimate(
    nonzero: NonzeroIncrements,
    m: int,
    basis: WaveletBasis,
    domain: Interval,
    L: int,
    kappa: float,
    J_user: int = 10,
    tune_on: TuneOn = TuneOn.N_T,
    step: float = 0.01,
) -> DensityEstimate:
    """Threshold estimate of P_Δ[f]^{*m} from the grouped increments."""
    grouped = group_increments(nonzero, m)
    n_tuning = nonzero.count if tune_on == TuneOn.N_T else grouped.size
    return threshold_estimate(grouped, basis, domain, L, kappa, J_user, n_tuning, step)


def corrected_estimators(
    nonzero: NonzeroIncrements,
    delta: float,
    orders: Iterable[int],
    basis: WaveletBasis,
    domain: Interval,
    L: int,
    kappa: float,
    theta_override: Optional[float] = None,
    J_user: int = 10,
    tune_on: TuneOn = TuneOn.N_T,
    step: float = 0.01,
    max_workers: int = 1,
) -> dict[int, DensityEstimate]:
    """
    Estimators corrected at each order K in `orders`, keyed by K.

    The power estimates P̂_{Δ,m} are computed once for m = 1..max(K)+1 and every
    order combines its first K+1 of them.
    """
    orders = sorted(set(orders))
    if not orders:
        raise ParameterError("at least one correction order is needed")
    if orders[0] < 0:
        raise ParameterError(f"order K must be nonnegative, got {orders[0]}")
    top = orders[-1]
    if nonzero.count < top + 1:
        raise InsufficientDataError(
            f"order K={top} needs at least {top + 1} nonzero increments, got {nonzero.count}"
        )

    if theta_override is None:
        intensity = estimate_intensity(nonzero, delta)
        theta, p_hat = intensity.theta_hat, intensity.p_hat
        base_warnings = ["p_hat clamped below 1"] if intensity.clamped else []
    else:
        theta, p_hat, base_warnings = theta_override, None, []

    def power(m: int) -> DensityEstimate:
        return convolution_power_estimate(nonzero, m, basis, domain, L, kappa, J_user, tune_on, step)

    ms = range(1, top + 2)
    if max_workers > 1 and top > 0:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            powers = list(pool.map(power, ms))
    else:
        powers = [power(m) for m in ms]

    estimates = {}
    for K in orders:
        inverse = inverse_coefficients(theta, delta, K)
        used = powers[:K + 1]
        values = np.zeros_like(used[0].values)
        for a_m, estimate in zip(inverse.a, used):
            values = values + a_m * estimate.values

        warnings = list(base_warnings)
        for message in inverse.warnings + [w for e in used for w in e.diagnostics.warnings]:
            if message not in warnings:
                warnings.append(message)
        diagnostics = EstimationDiagnostics(
            n_nonzero=nonzero.count,
            p_hat=p_hat,
            theta_hat=theta,
            J_effective=[e.diagnostics.J_effective[0] for e in used],
            eta=[e.diagnostics.eta[0] for e in used],
            K=K,
            warnings=warnings,
        )
        estimates[K] = DensityEstimate(domain=domain, step=step, values=values, diagnostics=diagnostics)
    return estimates


def corrected_estimator(
    nonzero: NonzeroIncrements,
    delta: float,
    order_K: int,
    basis: WaveletBasis,
    domain: Interval,
    L: int,
    kappa: float,
    theta_override: Optional[float] = None,
    J_user: int = 10,
    tune_on: TuneOn = TuneOn.N_T,
    step: float = 0.01,
    max_workers: int = 1,
) -> DensityEstimate:
    """
    Estimator corrected at order K: sum_{m=1}^{K+1} a_m(ϑ̂, Δ) P̂_{Δ,m}.

    With theta_override the intensity is taken as known instead of estimated.
    K = 0 is the uncorrected estimator a_1 P̂_{Δ,1}.
    """
    return corrected_estimators(
        nonzero, delta, [order_K], basis, domain, L, kappa,
        theta_override=theta_override, J_user=J_user, tune_on=tune_on, step=step, max_workers=max_workers,
    )[order_K]


def oracle_estimator(
    jumps,
    basis: WaveletBasis,
    domain: Interval,
    L: int,
    kappa: float,
    J_user: int = 10,
    step: float = 0.01,
) -> DensityEstimate:
    """The same threshold estimator applied to the latent jumps themselves."""
    sizes = np.asarray(jumps, dtype=np.float64).ravel()
    if sizes.size == 0:
        raise EmptyInputError("the oracle needs at least one jump")
    return threshold_estimate(sizes, basis, domain, L, kappa, J_user, sizes.size, step)


# =============================================================================
# Rates
# =============================================================================

def rate_exponent(s: float, p: float, pi: float) -> RateExponent:
    """alpha(s,p,pi) = min{s/(2s+1), (s+1/p-1/pi) / (2(s+1/2-1/pi))}."""
    if not (pi > 0 and p >= 1 and math.isfinite(s) and s > 1.0 / pi):
        raise ParameterError(f"need pi > 0, p >= 1 and s > 1/pi; got s={s}, p={p}, pi={pi}")
    dense = s / (2.0 * s + 1.0)
    sparse = (s + 1.0 / p - 1.0 / pi) / (2.0 * (s + 0.5 - 1.0 / pi))
    if dense <= sparse:
        return RateExponent(value=dense, branch="dense")
    return RateExponent(value=sparse, branch="sparse")


def rate_bound(T: float, delta: float, order_K: int, alpha: float) -> float:
    """max{T^-alpha, Δ^{K+1}}: statistical versus truncation error order."""
    if not (T > 0 and delta > 0 and order_K >= 0 and alpha > 0):
        raise ParameterError("rate bound needs T, delta, alpha > 0 and K >= 0")
    return max(T ** -alpha, delta ** (order_K + 1))


def minimal_correction_order(T: float, delta: float, constant: float = 1.0, max_order: int = 100) -> int:
    """Smallest K with T Δ^{2K+2} <= constant."""
    if not (T > 0 and delta > 0 and constant > 0):
        raise ParameterError("T, delta and constant must be positive")
    for K in range(max_order + 1):
        # relative slack: 1e4 * 0.1**4 evaluates to 1.0000000000000002
        if T * delta ** (2 * K + 2) <= constant * (1.0 + 1e-9):
            return K
    raise ParameterError(f"no order K <= {max_order} satisfies T*delta^(2K+2) <= {constant}")
