"""
Wavelet threshold density estimation on a compact domain.

Samples are linearly binned on the 2^L bin centres of D, the binned empirical
density is analysed with a periodized orthogonal filter bank (D mapped to
[0, 1]), detail coefficients are hard-thresholded and the result is
synthesised back and interpolated on the output mesh.

Coefficients are stored in the orthonormal basis of L2(D): the DWT of the
binned density times sqrt(h), h = |D| / 2^L. In those units an empirical
coefficient has standard deviation of order N^{-1/2}, which is what the
threshold rule eta = kappa N^{-1/2} sqrt(log N^{1/2}) is calibrated against.
"""

import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np
import pywt

from core.errors import EmptyInputError, ParameterError, ResolutionError
from models.schemas import (
    BinnedSample,
    DensityEstimate,
    EstimationDiagnostics,
    Interval,
    WaveletBasis,
    WaveletCoefficients,
    grid_size,
)

logger = logging.getLogger(__name__)

# =============================================================================
# FILTER BANKS
# =============================================================================

# Symlet 4 scaling filter (reconstruction lowpass), as tabulated by PyWavelets
# for "sym4". Sum is sqrt(2); even shifts are orthonormal.
SYM4_SCALING_FILTER = (
    0.0322231006040427,
    -0.012603967262037833,
    -0.09921954357684722,
    0.29785779560527736,
    0.8037387518059161,
    0.49761866763201545,
    -0.02963552764599851,
    -0.07576571478927333,
)

MODE = "periodization"


def basis_from_scaling_filter(name: str, taps, vanishing_moments: int) -> WaveletBasis:
    """Build an orthogonal basis from its scaling filter."""
    taps = [float(t) for t in taps]
    if len(taps) < 2 or len(taps) % 2:
        raise ParameterError("scaling filter must have an even number of taps")
    _, _, rec_lo, rec_hi = pywt.orthogonal_filter_bank(taps)
    wavelet = _pywt_wavelet(name, tuple(float(t) for t in rec_lo))
    psi = wavelet.wavefun(level=10)[1]
    return WaveletBasis(
        name=name,
        lowpass=[float(t) for t in rec_lo],
        highpass=[float(t) for t in rec_hi],
        sup_norm_bound=float(np.max(np.abs(psi))),
        vanishing_moments=vanishing_moments,
    )


@lru_cache(maxsize=1)
def symlet4_basis() -> WaveletBasis:
    """The sym4 basis used by default."""
    return basis_from_scaling_filter("sym4", SYM4_SCALING_FILTER, vanishing_moments=4)


def basis_by_name(name: str) -> WaveletBasis:
    """sym4, or any orthogonal discrete wavelet PyWavelets knows by name (db4, sym6, coif2, ...)."""
    if name == "sym4":
        return symlet4_basis()
    if name not in pywt.wavelist(kind="discrete"):
        raise ParameterError(f"unknown wavelet '{name}'")
    wavelet = pywt.Wavelet(name)
    if not wavelet.orthogonal:
        raise ParameterError(f"wavelet '{name}' is not orthogonal")
    return basis_from_scaling_filter(name, wavelet.rec_lo, max(wavelet.vanishing_moments_psi or 1, 1))


@lru_cache(maxsize=16)
def _pywt_wavelet(name: str, lowpass: tuple) -> pywt.Wavelet:
    filter_bank = [list(f) for f in pywt.orthogonal_filter_bank(list(lowpass))]
    wavelet = pywt.Wavelet(name, filter_bank=filter_bank)
    wavelet.orthogonal = True
    return wavelet


def to_pywt(basis: WaveletBasis) -> pywt.Wavelet:
    return _pywt_wavelet(basis.name, tuple(basis.lowpass))


def default_coarse_level(level_L: int, basis: WaveletBasis) -> int:
    """Coarsest level at which every filter support still fits the grid."""
    return level_L - pywt.dwt_max_level(2 ** level_L, basis.filter_length)


# =============================================================================
# TUNING RULES
# =============================================================================

def threshold_value(n: int, kappa: float) -> float:
    """eta = kappa n^{-1/2} sqrt(ln(n) / 2)."""
    if n == 0:
        raise EmptyInputError("threshold needs at least one sample")
    if n < 0:
        raise ParameterError(f"sample count must be positive, got {n}")
    if not (math.isfinite(kappa) and kappa > 0):
        raise ParameterError(f"kappa must be positive, got {kappa}")
    return kappa * math.sqrt(math.log(n) / 2.0 / n)


def max_resolution(n: int) -> int:
    """Largest J >= 0 with 2^J ln(n^{1/2}) / n <= 1."""
    if n < 2:
        raise ResolutionError(f"resolution rule needs n >= 2, got {n}")
    rate = math.log(n) / 2.0 / n
    J = max(int(math.floor(math.log2(1.0 / rate))), 0)
    while 2.0 ** (J + 1) * rate <= 1.0:
        J += 1
    while J > 0 and 2.0 ** J * rate > 1.0:
        J -= 1
    return J


def effective_resolution(n: int, J_user: int, level_L: int) -> tuple[int, list[str]]:
    """min(J_user, max_resolution(n), L), falling back to 0 when n < 2."""
    warnings: list[str] = []
    if n < 2:
        warnings.append(f"only {n} sample(s): resolution rule undefined, using coarse approximation only")
        return 0, warnings
    J_rule = max_resolution(n)
    J = min(J_user, J_rule, level_L)
    if J < min(J_user, J_rule):
        warnings.append(f"resolution capped at the binning level L={level_L} (requested {J_user}, rule {J_rule})")
    return J, warnings


# =============================================================================
# BINNING AND TRANSFORMS
# =============================================================================

def bin_samples(samples, domain: Interval, level_L: int) -> BinnedSample:
    """
    Linear binning on the 2^L bin centres lo + (i + 1/2) h.

    Each in-domain sample splits its unit mass between the two nearest centres
    in proportion to distance; samples between the domain edge and the outer
    centres go entirely to that centre. Out-of-domain samples are dropped and
    tallied.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInputError("cannot bin an empty sample")
    if level_L < 1:
        raise ResolutionError(f"binning level must be >= 1, got {level_L}")

    n_bins = 2 ** level_L
    h = domain.width / n_bins
    inside = (x >= domain.lo) & (x <= domain.hi)
    x_in = x[inside]

    position = np.clip((x_in - domain.lo) / h - 0.5, 0.0, n_bins - 1.0)
    left = np.minimum(np.floor(position).astype(np.int64), n_bins - 2)
    frac = position - left

    counts = np.bincount(left, weights=1.0 - frac, minlength=n_bins)
    counts += np.bincount(left + 1, weights=frac, minlength=n_bins)

    n_dropped = int(x.size - x_in.size)
    if n_dropped:
        logger.debug("Dropped %d of %d samples outside [%g, %g]", n_dropped, x.size, domain.lo, domain.hi)
    return BinnedSample(
        domain=domain,
        level_L=level_L,
        counts=counts,
        n_samples=int(x_in.size),
        n_dropped=n_dropped,
    )


def binned_density(binned: BinnedSample) -> np.ndarray:
    """Empirical density on the bin centres: counts / (N h)."""
    return binned.counts / (binned.n_total * binned.bin_width)


def empirical_coefficients(
    binned: BinnedSample,
    basis: WaveletBasis,
    J: int,
    coarse_level: Optional[int] = None,
) -> WaveletCoefficients:
    """Analyse the binned density, keeping detail levels j <= J (all of them when J = L)."""
    L = binned.level_L
    if J > L:
        raise ResolutionError(f"resolution J={J} exceeds binning level L={L}")
    if J < 0:
        raise ResolutionError(f"resolution must be nonnegative, got {J}")
    if coarse_level is None:
        coarse_level = default_coarse_level(L, basis)
    if not 0 <= coarse_level <= L:
        raise ResolutionError(f"coarse level {coarse_level} outside [0, {L}]")

    scale = math.sqrt(binned.bin_width)
    signal = binned_density(binned)
    n_levels = L - coarse_level
    if n_levels > 0:
        parts = pywt.wavedec(signal, to_pywt(basis), mode=MODE, level=n_levels)
    else:
        parts = [signal]

    betas = {
        coarse_level + i: detail * scale
        for i, detail in enumerate(parts[1:])
        if coarse_level + i <= J
    }
    return WaveletCoefficients(
        domain=binned.domain,
        level_L=L,
        coarse_level=coarse_level,
        alpha0=parts[0] * scale,
        betas=betas,
        max_level_J=J,
    )


def hard_threshold(coeffs: WaveletCoefficients, eta: float) -> WaveletCoefficients:
    """Zero every detail coefficient with |beta| < eta; alphas untouched."""
    if not eta >= 0:
        raise ParameterError(f"threshold must be nonnegative, got {eta}")
    kept = {j: np.where(np.abs(beta) >= eta, beta, 0.0) for j, beta in coeffs.betas.items()}
    return coeffs.model_copy(update={"betas": kept})


def count_surviving(coeffs: WaveletCoefficients) -> int:
    return int(sum(np.count_nonzero(beta) for beta in coeffs.betas.values()))


def inverse_transform(coeffs: WaveletCoefficients, basis: WaveletBasis) -> np.ndarray:
    """Synthesise the density on the 2^L bin centres."""
    scale = math.sqrt(coeffs.bin_width)
    parts = [coeffs.alpha0 / scale]
    for j in range(coeffs.coarse_level, coeffs.level_L):
        beta = coeffs.betas.get(j)
        parts.append(np.zeros(2 ** j) if beta is None else beta / scale)
    if len(parts) == 1:
        return parts[0].copy()
    return pywt.waverec(parts, to_pywt(basis), mode=MODE)


def reconstruct(coeffs: WaveletCoefficients, basis: WaveletBasis, step: float = 0.01) -> DensityEstimate:
    """Synthesise, then interpolate linearly onto lo, lo+step, ..., hi."""
    if not step > 0:
        raise ParameterError(f"grid step must be positive, got {step}")
    domain = coeffs.domain
    signal = inverse_transform(coeffs, basis)
    h = coeffs.bin_width
    centers = domain.lo + (np.arange(signal.size) + 0.5) * h
    grid = domain.lo + step * np.arange(grid_size(domain, step))
    return DensityEstimate(domain=domain, step=step, values=np.interp(grid, centers, signal))


def positive_part(estimate: DensityEstimate) -> DensityEstimate:
    """Display-only clipping of negative values; losses never use this."""
    return estimate.model_copy(update={"values": np.maximum(estimate.values, 0.0)})


# =============================================================================
# PIPELINE
# =============================================================================

def threshold_estimate(
    samples,
    basis: WaveletBasis,
    domain: Interval,
    level_L: int,
    kappa: float,
    J_user: int,
    n_tuning: int,
    step: float = 0.01,
    coarse_level: Optional[int] = None,
) -> DensityEstimate:
    """bin -> analyse at the effective resolution -> hard threshold -> reconstruct."""
    J, warnings = effective_resolution(n_tuning, J_user, level_L)
    eta = threshold_value(n_tuning, kappa)
    for message in warnings:
        logger.warning(message)

    binned = bin_samples(samples, domain, level_L)
    coeffs = hard_threshold(empirical_coefficients(binned, basis, J, coarse_level), eta)
    estimate = reconstruct(coeffs, basis, step)
    diagnostics = EstimationDiagnostics(
        n_nonzero=binned.n_total,
        J_effective=[J],
        eta=[eta],
        warnings=warnings,
    )
    return estimate.model_copy(update={"diagnostics": diagnostics})
