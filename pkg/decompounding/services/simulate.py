"""Compound Poisson path simulation and the analytic jump densities."""

import logging
import math
from typing import Optional, Union

import numpy as np
from scipy import stats

from core.errors import ParameterError
from models.schemas import ComponentKind, JumpDensityModel, NonzeroIncrements, ObservationRecord

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]


# =============================================================================
# Jump densities
# =============================================================================

def density_eval(model: JumpDensityModel, x):
    """Mixture density at x (scalar or array)."""
    x_arr = np.asarray(x, dtype=np.float64)
    total = np.zeros_like(x_arr)
    for component in model.components:
        if component.kind == ComponentKind.GAUSSIAN:
            pdf = stats.norm.pdf(x_arr, loc=component.location, scale=component.spread)
        else:
            # (1/2b) exp(-|x - mu| / b)
            pdf = stats.laplace.pdf(x_arr, loc=component.location, scale=component.spread)
        total = total + component.weight * pdf
    return float(total) if total.ndim == 0 else total


def mixture_mean(model: JumpDensityModel) -> float:
    """Analytic mean of the mixture."""
    return float(sum(c.weight * c.location for c in model.components))


def sample_jumps(model: JumpDensityModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw i.i.d. jump sizes: component by weight, then from that component."""
    if size == 0:
        return np.empty(0)
    which = rng.choice(len(model.components), size=size, p=model.weights)
    out = np.empty(size)
    for idx, component in enumerate(model.components):
        mask = which == idx
        n = int(mask.sum())
        if n == 0:
            continue
        if component.kind == ComponentKind.GAUSSIAN:
            out[mask] = rng.normal(component.location, component.spread, size=n)
        else:
            out[mask] = rng.laplace(component.location, component.spread, size=n)
    return out


def sample_jump(model: JumpDensityModel, rng: np.random.Generator) -> float:
    """Draw a single jump size."""
    return float(sample_jumps(model, rng, 1)[0])


# =============================================================================
# Paths
# =============================================================================

def _check_positive(name: str, value: float, allow_zero: bool = False) -> None:
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ParameterError(f"{name} must be {'nonnegative' if allow_zero else 'positive'}, got {value}")


def slot_count(horizon: float, delta: float) -> int:
    """floor(T / Δ), robust to representation error in T / Δ."""
    return int(math.floor(horizon / delta * (1.0 + 1e-12)))


def simulate_path(
    intensity: float,
    model: JumpDensityModel,
    horizon: float,
    delta: float,
    seed: Seed,
) -> ObservationRecord:
    """
    Simulate X_t = sum_{i <= R_t} xi_i observed at Δ, 2Δ, ..., floor(T/Δ)Δ.

    Per-slot jump counts are drawn Poisson(ϑΔ) directly; jump times are
    uniform inside their slot. Identical inputs and seed give identical output.
    """
    _check_positive("intensity", intensity, allow_zero=True)
    _check_positive("horizon", horizon)
    _check_positive("delta", delta)
    if delta > horizon:
        raise ParameterError(f"delta={delta} exceeds horizon={horizon}")

    rng = np.random.default_rng(seed)
    n_slots = slot_count(horizon, delta)

    counts = rng.poisson(intensity * delta, size=n_slots)
    n_jumps = int(counts.sum())
    sizes = sample_jumps(model, rng, n_jumps)

    slots = np.repeat(np.arange(n_slots), counts)
    times = (slots + rng.uniform(size=n_jumps)) * delta
    order = np.argsort(times, kind="stable")
    times, sizes, slots = times[order], sizes[order], slots[order]

    increments = np.bincount(slots, weights=sizes, minlength=n_slots).astype(np.float64)

    logger.debug("Simulated %d jumps over %d slots", n_jumps, n_slots)
    return ObservationRecord(
        delta=delta,
        horizon=horizon,
        intensity_true=intensity,
        increments=increments,
        jump_times=times,
        jump_sizes=sizes,
        jump_counts=counts,
    )


def nonzero_from_increments(increments, total_slots: Optional[int] = None) -> NonzeroIncrements:
    """Keep the nonzero increments in occurrence order."""
    values = np.asarray(increments, dtype=np.float64)
    if total_slots is None:
        total_slots = int(values.size)
    return NonzeroIncrements(values=values[values != 0.0], total_slots=total_slots)


def extract_nonzero(record: ObservationRecord) -> NonzeroIncrements:
    """Nonzero increments of a simulated record."""
    return nonzero_from_increments(record.increments, record.n_slots)


def nonzero_jump_counts(record: ObservationRecord) -> np.ndarray:
    """Latent number of jumps behind each nonzero increment, in occurrence order."""
    return record.jump_counts[record.increments != 0.0]
