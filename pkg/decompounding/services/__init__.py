"""Service modules: simulation, wavelet estimation, decompounding, oracles and experiments."""

from .simulate import simulate_path, extract_nonzero, density_eval, sample_jump
from .wavelet import symlet4_basis, threshold_estimate
from .decompound import corrected_estimator, corrected_estimators, oracle_estimator, estimate_intensity
from .gridmath import compound_forward, inverse_truncated, grid_l2_loss
from .harness import run_experiment, run_replicate, export_report
