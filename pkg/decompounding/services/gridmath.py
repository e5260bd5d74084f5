"""
Numerical oracles on uniform grids.

Exact (up to quadrature) compounding P_Δ[f], the truncated inverse L_{Δ,K},
FFT convolution powers and the grid L2 loss. These back the validation
tables and the acceptance checks; the estimators never call them.
"""

import logging
from collections.abc import Iterator
from typing import Union

import numpy as np
from scipy.signal import fftconvolve

from core.errors import ParameterError
from models.schemas import CompoundedGrid, DensityEstimate, GridFunction, Interval, JumpDensityModel
from services.decompound import compounding_weights, inverse_coefficients
from services.simulate import density_eval

logger = logging.getLogger(__name__)

# Relative tolerance for grid alignment checks
ALIGN_TOL = 1e-9


def tabulate(model: JumpDensityModel, domain: Interval, step: float) -> GridFunction:
    """Evaluate a jump density on lo, lo+step, ..., hi."""
    n = int(round(domain.width / step)) + 1
    grid = domain.lo + step * np.arange(n)
    return GridFunction(lo=domain.lo, step=step, values=density_eval(model, grid))


def _check_steps(g1: GridFunction, g2: GridFunction) -> float:
    if abs(g1.step - g2.step) > ALIGN_TOL * g1.step:
        raise ParameterError(f"mesh mismatch: {g1.step} vs {g2.step}")
    return g1.step


def _offset(origin: float, point: float, step: float) -> int:
    shift = (point - origin) / step
    index = int(round(shift))
    if abs(shift - index) > 1e-6:
        raise ParameterError(f"{point} is not on the grid starting at {origin} with step {step}")
    return index


def convolve(g1: GridFunction, g2: GridFunction) -> GridFunction:
    """(g1 * g2)(x) on the full support, Riemann-scaled by the mesh."""
    step = _check_steps(g1, g2)
    values = fftconvolve(g1.values, g2.values, mode="full") * step
    return GridFunction(lo=g1.lo + g2.lo, step=step, values=values)


def restrict(g: GridFunction, lo: float, hi: float) -> GridFunction:
    """Crop to the aligned sub-grid [lo, hi]."""
    start = _offset(g.lo, lo, g.step)
    stop = _offset(g.lo, hi, g.step)
    if start < 0 or stop >= g.values.size or stop < start:
        raise ParameterError(f"[{lo}, {hi}] is not inside [{g.lo}, {g.hi}]")
    return GridFunction(lo=g.lo + start * g.step, step=g.step, values=g.values[start : stop + 1].copy())


def convolution_powers(g: GridFunction, count: int) -> Iterator[GridFunction]:
    """g, g*g, ..., g^{*count}, each cropped back to the support of g."""
    power = g
    yield power
    for _ in range(count - 1):
        power = restrict(convolve(power, g), g.lo, g.hi)
        yield power


def _series(g: GridFunction, coefficients: np.ndarray) -> GridFunction:
    total = np.zeros_like(g.values)
    for c, power in zip(coefficients, convolution_powers(g, len(coefficients))):
        total += c * power.values
    return GridFunction(lo=g.lo, step=g.step, values=total)


def compound_forward(f: GridFunction, theta: float, delta: float, truncation_M: int) -> CompoundedGrid:
    """sum_{m <= M} p_m(Δ) f^{*m}, with the weight deficit 1 - sum p_m."""
    weights = compounding_weights(theta, delta, truncation_M)
    deficit = weights.tail_mass
    logger.debug("Compounding with M=%d terms, weight deficit %.3e", truncation_M, deficit)
    return CompoundedGrid(density=_series(f, weights.weights), deficit=deficit)


def inverse_truncated(nu: GridFunction, theta: float, delta: float, order_K: int) -> GridFunction:
    """L_{Δ,K}[ν] = sum_{m=1}^{K+1} a_m ν^{*m}."""
    return _series(nu, inverse_coefficients(theta, delta, order_K).a)


def composition_error(f: GridFunction, theta: float, delta: float, order_K: int, truncation_M: int = 20) -> float:
    """sup |L_{Δ,K}[P_Δ[f]] - f|."""
    nu = compound_forward(f, theta, delta, truncation_M).density
    recovered = inverse_truncated(nu, theta, delta, order_K)
    return float(np.max(np.abs(recovered.values - f.values)))


def composition_table(
    f: GridFunction,
    theta: float,
    deltas: list[float],
    orders: list[int],
    truncation_M: int = 20,
) -> list[dict]:
    """One row per (K, Δ) with the composition error and the halving ratio."""
    rows = []
    for K in orders:
        previous = None
        for delta in sorted(deltas, reverse=True):
            error = composition_error(f, theta, delta, K, truncation_M)
            rows.append({
                "K": K,
                "delta": delta,
                "sup_error": error,
                "ratio_to_previous": None if previous is None or error == 0 else previous / error,
            })
            previous = error
    return rows


def grid_l2_loss(est: DensityEstimate, truth: Union[GridFunction, JumpDensityModel]) -> float:
    """sum_p (f_hat(x_p) - f(x_p))^2 * step over the estimate's mesh."""
    grid = est.grid
    if isinstance(truth, GridFunction):
        _check_steps(truth, GridFunction(lo=est.domain.lo, step=est.step, values=np.zeros(1)))
        start = _offset(truth.lo, est.domain.lo, truth.step)
        if start < 0 or start + grid.size > truth.values.size:
            raise ParameterError("truth grid does not cover the estimate grid")
        reference = truth.values[start : start + grid.size]
    else:
        reference = density_eval(truth, grid)
    return float(np.sum((est.values - reference) ** 2) * est.step)
