import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from core.errors import ParameterError
from models.schemas import DensityEstimate, GridFunction, Interval, JumpDensityModel
from services.decompound import compounding_weights, inverse_coefficients
from services.gridmath import (
    composition_error,
    composition_table,
    compound_forward,
    convolve,
    convolution_powers,
    grid_l2_loss,
    inverse_truncated,
    restrict,
    tabulate,
)
from services.simulate import extract_nonzero, simulate_path

WIDE = Interval(lo=-30.0, hi=30.0)


@pytest.fixture
def wide_mixture(mixture):
    return tabulate(mixture, WIDE, 0.01)


# =============================================================================
# Convolution
# =============================================================================

def test_gaussian_convolution_closed_form():
    g = tabulate(JumpDensityModel.gaussian(), Interval(lo=-10.0, hi=10.0), 0.01)
    result = convolve(g, g)
    truth = tabulate(JumpDensityModel.gaussian(0.0, math.sqrt(2.0)), Interval(lo=-20.0, hi=20.0), 0.01)
    assert result.lo == pytest.approx(-20.0)
    assert result.values.size == truth.values.size
    assert np.max(np.abs(result.values - truth.values)) < 1e-6


def test_unit_mass_is_the_identity(mixture):
    f = tabulate(mixture, Interval(lo=-6.0, hi=6.0), 0.01)
    delta = GridFunction(lo=0.0, step=0.01, values=np.array([1.0 / 0.01]))
    result = convolve(f, delta)
    assert result.lo == pytest.approx(f.lo)
    assert np.max(np.abs(result.values - f.values)) < 1e-6


def test_convolution_conserves_mass(mixture, gaussian):
    g1 = tabulate(mixture, Interval(lo=-8.0, hi=8.0), 0.01)
    g2 = tabulate(gaussian, Interval(lo=-5.0, hi=7.0), 0.01)
    assert convolve(g1, g2).integral() == pytest.approx(g1.integral() * g2.integral(), abs=1e-9)


def test_convolution_is_commutative_and_associative(mixture, gaussian):
    a = tabulate(mixture, Interval(lo=-6.0, hi=6.0), 0.02)
    b = tabulate(gaussian, Interval(lo=-4.0, hi=5.0), 0.02)
    c = tabulate(JumpDensityModel.laplace(0.5, 0.3), Interval(lo=-3.0, hi=3.0), 0.02)
    ab, ba = convolve(a, b), convolve(b, a)
    assert ab.lo == pytest.approx(ba.lo)
    assert np.max(np.abs(ab.values - ba.values)) < 1e-9
    left, right = convolve(ab, c), convolve(a, convolve(b, c))
    assert left.lo == pytest.approx(right.lo)
    assert np.max(np.abs(left.values - right.values)) < 1e-9


def test_extra_padding_changes_nothing(mixture):
    f = tabulate(mixture, Interval(lo=-6.0, hi=6.0), 0.01)
    padded = GridFunction(lo=f.lo - 2.0, step=0.01, values=np.concatenate([np.zeros(200), f.values, np.zeros(300)]))
    plain = convolve(f, f)
    wide = restrict(convolve(padded, padded), plain.lo, plain.hi)
    assert np.max(np.abs(wide.values - plain.values)) < 1e-10


def test_mesh_mismatch_rejected(mixture):
    a = tabulate(mixture, Interval(lo=-6.0, hi=6.0), 0.01)
    b = tabulate(mixture, Interval(lo=-6.0, hi=6.0), 0.02)
    with pytest.raises(ParameterError):
        convolve(a, b)


def test_restrict_crops_aligned_window(wide_mixture):
    window = restrict(wide_mixture, -6.0, 6.0)
    assert window.lo == pytest.approx(-6.0)
    assert window.values.size == 1201
    assert window.hi == pytest.approx(6.0)


@pytest.mark.parametrize("lo,hi", [(-40.0, 0.0), (0.0, 40.0), (0.005, 1.0), (2.0, 1.0)])
def test_restrict_rejects_bad_windows(wide_mixture, lo, hi):
    with pytest.raises(ParameterError):
        restrict(wide_mixture, lo, hi)


def test_powers_stay_on_the_support(wide_mixture):
    powers = list(convolution_powers(wide_mixture, 4))
    assert len(powers) == 4
    mass = wide_mixture.integral()
    for m, power in enumerate(powers, start=1):
        assert power.lo == pytest.approx(-30.0)
        assert power.values.size == wide_mixture.values.size
        assert power.integral() == pytest.approx(mass ** m, abs=1e-9)


# =============================================================================
# Compounding and its inverse
# =============================================================================

def test_tiny_intensity_leaves_density_unchanged(wide_mixture):
    compounded = compound_forward(wide_mixture, 1.0, 1e-6, 3)
    assert np.max(np.abs(compounded.density.values - wide_mixture.values)) < 1e-6


def test_compounded_mass_is_sum_of_weights(wide_mixture):
    compounded = compound_forward(wide_mixture, 1.0, 0.1, 10)
    weights = compounding_weights(1.0, 0.1, 10).weights
    mass = wide_mixture.integral()
    expected = sum(p * mass ** m for m, p in enumerate(weights, start=1))
    assert compounded.density.integral() == pytest.approx(expected, abs=1e-9)
    assert compounded.deficit == pytest.approx(1.0 - weights.sum(), abs=1e-15)


def test_compounded_law_matches_simulated_increments(gaussian):
    f = tabulate(gaussian, WIDE, 0.01)
    nu = compound_forward(f, 1.0, 0.1, 10).density
    values = extract_nonzero(simulate_path(1.0, gaussian, 200_000.0, 0.1, seed=12)).values
    n = values.size
    edges = np.linspace(-4.0, 4.0, 33)
    observed, _ = np.histogram(values, bins=edges)
    for a, b, count in zip(edges[:-1], edges[1:], observed):
        window = restrict(nu, float(a), float(b))
        p = trapezoid(window.values, dx=window.step)
        assert abs(count / n - p) < 5 * math.sqrt(p * (1 - p) / n)


def test_order_zero_inverse_is_scaled_input(wide_mixture):
    result = inverse_truncated(wide_mixture, 1.0, 0.1, 0)
    a1 = inverse_coefficients(1.0, 0.1, 0).a[0]
    assert np.allclose(result.values, a1 * wide_mixture.values, rtol=0, atol=1e-15)


def test_long_inverse_recovers_the_density(wide_mixture):
    assert composition_error(wide_mixture, 1.0, 0.1, order_K=19, truncation_M=20) < 1e-8


def test_composition_error_decreases_with_order(wide_mixture):
    errors = [composition_error(wide_mixture, 1.0, 0.1, K) for K in range(6)]
    assert all(a > b for a, b in zip(errors, errors[1:]))


@pytest.mark.parametrize("K", [0, 1, 2])
def test_bias_halves_at_the_truncation_order(wide_mixture, K):
    rows = composition_table(wide_mixture, 1.0, [0.2, 0.1, 0.05], [K])
    ratios = [row["ratio_to_previous"] for row in rows if row["ratio_to_previous"] is not None]
    assert len(ratios) == 2
    for ratio in ratios:
        assert 0.7 * 2 ** (K + 1) <= ratio <= 1.4 * 2 ** (K + 1)


def test_composition_table_rows(wide_mixture):
    rows = composition_table(wide_mixture, 1.0, [0.1, 0.2], [0, 1])
    assert [(row["K"], row["delta"]) for row in rows] == [(0, 0.2), (0, 0.1), (1, 0.2), (1, 0.1)]
    assert rows[0]["ratio_to_previous"] is None


# =============================================================================
# Loss
# =============================================================================

def test_loss_of_truth_is_zero(mixture, domain):
    truth = tabulate(mixture, domain, 0.01)
    estimate = DensityEstimate(domain=domain, step=0.01, values=truth.values.copy())
    assert grid_l2_loss(estimate, mixture) == pytest.approx(0.0, abs=1e-20)
    assert grid_l2_loss(estimate, truth) == 0.0


def test_loss_of_constant_offset(mixture, domain):
    truth = tabulate(mixture, domain, 0.01)
    estimate = DensityEstimate(domain=domain, step=0.01, values=truth.values + 0.01)
    assert grid_l2_loss(estimate, mixture) == pytest.approx(1.201e-3, rel=1e-9)


def test_loss_against_a_wider_grid(mixture, domain, wide_mixture):
    truth = tabulate(mixture, domain, 0.01)
    estimate = DensityEstimate(domain=domain, step=0.01, values=truth.values + 0.01)
    assert grid_l2_loss(estimate, wide_mixture) == pytest.approx(1.201e-3, rel=1e-6)


def test_loss_grid_mismatch(mixture, domain):
    estimate = DensityEstimate(domain=domain, step=0.01, values=np.zeros(1201))
    with pytest.raises(ParameterError):
        grid_l2_loss(estimate, tabulate(mixture, domain, 0.02))
    with pytest.raises(ParameterError):
        grid_l2_loss(estimate, tabulate(mixture, Interval(lo=-3.0, hi=3.0), 0.01))
