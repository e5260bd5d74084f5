"""Shared pytest fixtures."""

import numpy as np
import pytest

from models.schemas import ExperimentConfig, Interval, JumpDensityModel
from services.wavelet import symlet4_basis


@pytest.fixture
def mixture():
    """0.95 N(0,1) + 0.05 Laplace(1, 0.1)."""
    return JumpDensityModel.gaussian_laplace_mixture()


@pytest.fixture
def gaussian():
    return JumpDensityModel.gaussian()


@pytest.fixture
def basis():
    return symlet4_basis()


@pytest.fixture
def domain():
    return Interval(lo=-6.0, hi=6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_config():
    """A short version of the reference study that runs in well under a second per replicate."""
    return ExperimentConfig.reference_study(horizon_T=500.0, replicates_M=4, master_seed=7)
