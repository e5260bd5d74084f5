"""
Monte Carlo experiment driver.

Each replicate simulates one trajectory and evaluates the oracle and every
corrected estimator on it. Replicates run on independent seed substreams, so
the report does not depend on the number of worker threads.
"""

import logging
import math
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from core.errors import DecompoundingError, ExperimentError, ParameterError
from models.schemas import (
    EstimatorSummary,
    ExperimentConfig,
    ExperimentReport,
    ExportFormat,
    PairedComparison,
    PmEstimate,
    ReplicateRecord,
    WaveletBasis,
)
from services.decompound import corrected_estimators, oracle_estimator
from services.gridmath import grid_l2_loss, tabulate
from services.simulate import extract_nonzero, nonzero_jump_counts, simulate_path
from services.storage import read_json, write_json, write_table_csv
from services.wavelet import symlet4_basis

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[float, str], None]

REPORT_COLUMNS = ["name", "mean_l2", "sd_l2", "n_ok", "n_failed"]


def replicate_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Substream `index` of `master_seed`."""
    if master_seed < 0 or index < 0:
        raise ParameterError("seeds and replicate indices must be nonnegative")
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _jump_count_tally(counts: np.ndarray) -> dict[int, int]:
    values, freq = np.unique(counts, return_counts=True)
    return {int(m): int(c) for m, c in zip(values, freq)}


def run_replicate(config: ExperimentConfig, index: int, basis: Optional[WaveletBasis] = None) -> ReplicateRecord:
    """Simulate one path and evaluate every estimator on it."""
    basis = basis or symlet4_basis()
    record = simulate_path(config.theta, config.model, config.horizon_T, config.delta, replicate_seed(config.master_seed, index))
    nonzero = extract_nonzero(record)
    common = dict(
        index=index,
        path_checksum=record.checksum(),
        n_nonzero=nonzero.count,
        n_jumps=int(record.jump_sizes.size),
        jump_count_tally=_jump_count_tally(nonzero_jump_counts(record)),
    )

    needed = max(config.K_list) + 1
    if record.jump_sizes.size == 0:
        return ReplicateRecord(ok=False, failure="path has no jumps", **common)
    if nonzero.count < needed:
        return ReplicateRecord(
            ok=False,
            failure=f"{nonzero.count} nonzero increments, order K={needed - 1} needs {needed}",
            **common,
        )

    truth = tabulate(config.model, config.domain, config.grid_step)
    try:
        estimates = {
            "oracle": oracle_estimator(
                record.jump_sizes, basis, config.domain, config.L, config.kappa, config.J, config.grid_step,
            )
        }
        corrected = corrected_estimators(
            nonzero, config.delta, config.K_list, basis, config.domain, config.L, config.kappa,
            J_user=config.J, tune_on=config.tune_on, step=config.grid_step,
        )
        estimates.update({f"K{K}": estimate for K, estimate in corrected.items()})
    except DecompoundingError as e:
        logger.warning("Replicate %d failed: %s", index, e)
        return ReplicateRecord(ok=False, failure=str(e), **common)

    # Every corrected estimator shares the m = 1 tuning
    first = estimates[f"K{config.K_list[0]}"].diagnostics
    warnings: list[str] = []
    for estimate in estimates.values():
        for message in estimate.diagnostics.warnings:
            if message not in warnings:
                warnings.append(message)
    return ReplicateRecord(
        ok=True,
        theta_hat=first.theta_hat,
        J_effective=first.J_effective[0],
        eta=first.eta[0],
        losses={name: grid_l2_loss(est, truth) for name, est in estimates.items()},
        curves={name: est.values for name, est in estimates.items()},
        warnings=warnings,
        **common,
    )


# =============================================================================
# Aggregation
# =============================================================================

def _spread(values: np.ndarray) -> tuple[float, float]:
    """Sample SD (0 for a single value) and the standard error of the mean."""
    if values.size < 2:
        return 0.0, 0.0
    sd = float(np.std(values, ddof=1))
    return sd, sd / math.sqrt(values.size)


def estimate_pm_frequencies(records: list[ReplicateRecord], max_m: int = 3) -> list[PmEstimate]:
    """
    Frequency of m latent jumps among the nonzero increments, m = 1..max_m.

    Frequencies are pooled within a replicate, then averaged over replicates.
    """
    rows = []
    for r in records:
        total = sum(r.jump_count_tally.values())
        if total == 0:
            continue
        rows.append([r.jump_count_tally.get(m, 0) / total for m in range(1, max_m + 1)])
    table = np.array(rows, dtype=np.float64).reshape(-1, max_m)

    estimates = []
    for m in range(1, max_m + 1):
        column = table[:, m - 1]
        sd, se = _spread(column)
        mean = float(column.mean()) if column.size else 0.0
        estimates.append(PmEstimate(m=m, mean=mean, sd=sd, se=se))
    return estimates


def _summaries(names: list[str], ok: list[ReplicateRecord], n_failed: int) -> list[EstimatorSummary]:
    summaries = []
    for name in names:
        losses = np.array([r.losses[name] for r in ok])
        sd, se = _spread(losses)
        summaries.append(EstimatorSummary(
            name=name,
            mean_l2=float(losses.mean()),
            sd_l2=sd,
            se_l2=se,
            n_ok=len(ok),
            n_failed=n_failed,
            losses=losses.tolist(),
        ))
    return summaries


def _oracle_ratios(summaries: list[EstimatorSummary]) -> dict[str, float]:
    oracle = next(s.mean_l2 for s in summaries if s.name == "oracle")
    if oracle <= 0:
        return {}
    return {s.name: s.mean_l2 / oracle for s in summaries}


def _reference_notes(reference: Optional[dict[str, float]], summaries: list[EstimatorSummary]) -> list[str]:
    """How far the measured losses sit from the reference losses, overall and relative to the oracle."""
    if not reference:
        return []
    scales = {s.name: s.mean_l2 / reference[s.name] for s in summaries if reference.get(s.name, 0) > 0}
    if not scales:
        return []
    detail = ", ".join(f"{name} {scale:.3g}" for name, scale in scales.items())
    notes = [
        f"mean L2 losses are {float(np.mean(list(scales.values()))):.3g} times the reference losses ({detail}); "
        "compare ratios to the oracle rather than absolute values"
    ]
    if reference.get("oracle", 0) > 0:
        ratios = ", ".join(
            f"{name} {reference[name] / reference['oracle']:.3g}" for name in scales if name != "oracle"
        )
        notes.append(f"reference loss ratios to the oracle: {ratios}")
    return notes


def _comparisons(config: ExperimentConfig, ok: list[ReplicateRecord]) -> list[PairedComparison]:
    """Oracle against each K, then each K against the next."""
    names = [f"K{K}" for K in config.K_list]
    pairs = [("oracle", name) for name in names] + list(zip(names[1:], names[:-1]))
    comparisons = []
    for first, second in pairs:
        diff = np.array([r.losses[first] - r.losses[second] for r in ok])
        _, se = _spread(diff)
        comparisons.append(PairedComparison(
            first=first, second=second, mean_difference=float(diff.mean()), se_difference=se,
        ))
    return comparisons


def run_experiment(
    config: ExperimentConfig,
    threads: int = 1,
    progress_callback: Optional[ProgressCallback] = None,
    basis: Optional[WaveletBasis] = None,
) -> ExperimentReport:
    """
    Run `replicates_M` replicates and aggregate them.

    Args:
        config: Experiment definition
        threads: Worker threads for the replicates
        progress_callback: Optional callback(fraction, message)
        basis: Wavelet basis (sym4 if None)

    Returns:
        The report; records are sorted by replicate index
    """
    if threads < 1:
        raise ParameterError(f"threads must be >= 1, got {threads}")
    basis = basis or symlet4_basis()
    total = config.replicates_M
    done = 0
    lock = threading.Lock()
    started = time.perf_counter()

    def one(index: int) -> ReplicateRecord:
        nonlocal done
        record = run_replicate(config, index, basis)
        with lock:
            done += 1
            count = done
        if progress_callback:
            progress_callback(count / total, f"Replicate {count}/{total}")
        return record

    logger.info("Running %d replicates on %d thread(s)", total, threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(total)))
    else:
        records = [one(i) for i in range(total)]
    records.sort(key=lambda r: r.index)

    ok = [r for r in records if r.ok]
    n_failed = len(records) - len(ok)
    if not ok:
        raise ExperimentError(f"all {total} replicates failed (first: {records[0].failure})")
    if n_failed:
        logger.warning("%d of %d replicates failed and are excluded", n_failed, total)

    names = config.estimator_names
    truth = tabulate(config.model, config.domain, config.grid_step)
    mae = {name: np.mean([np.abs(r.curves[name] - truth.values) for r in ok], axis=0) for name in names}
    example = {"f": truth.values, **ok[0].curves}

    summaries = _summaries(names, ok, n_failed)
    notes = [
        "sd_l2 is the sample standard deviation of the per-replicate losses; se_l2 = sd_l2 / sqrt(n_ok)",
        "p_m frequencies use latent jump counts and exist only for simulated data",
    ]
    if len(ok) < 2:
        notes.append("a single successful replicate: standard deviations are undefined and reported as 0")
    if n_failed:
        notes.append(f"{n_failed} failed replicate(s) excluded")
    notes.extend(_reference_notes(config.reference_losses, summaries))
    warning_counts = Counter(message for r in ok for message in r.warnings)
    for message, count in sorted(warning_counts.items()):
        notes.append(f"{count} replicate(s) warned: {message}")

    replicates = [r.model_copy(update={"curves": None}) for r in records]
    J_values = [r.J_effective for r in ok]
    elapsed = time.perf_counter() - started
    logger.info("Experiment finished in %.1fs (%d ok, %d failed)", elapsed, len(ok), n_failed)

    return ExperimentReport(
        config=config,
        estimators=summaries,
        pm_estimates=estimate_pm_frequencies(ok),
        comparisons=_comparisons(config, ok),
        replicates=replicates,
        n_ok=len(ok),
        n_failed=n_failed,
        sd_defined=len(ok) >= 2,
        J_effective_min=min(J_values),
        J_effective_max=max(J_values),
        eta_mean=float(np.mean([r.eta for r in ok])),
        oracle_ratios=_oracle_ratios(summaries),
        notes=notes,
        grid=truth.grid,
        mae_curves=mae,
        example_curves=example,
        elapsed_seconds=elapsed,
    )


# =============================================================================
# Outputs
# =============================================================================

def export_report(report: ExperimentReport, fmt: Union[ExportFormat, str], path: Union[str, Path]) -> Path:
    """CSV: one row per estimator (name, mean_l2, sd_l2, n_ok, n_failed). JSON: the full report."""
    fmt = ExportFormat(fmt)
    if fmt == ExportFormat.JSON:
        return write_json(path, report)
    columns = {column: [getattr(s, column) for s in report.estimators] for column in REPORT_COLUMNS}
    return write_table_csv(path, columns)


def write_experiment_outputs(report: ExperimentReport, out_dir: Union[str, Path]) -> dict[str, Path]:
    """Write the report files, plot-ready curves and timing.json into out_dir."""
    out_dir = Path(out_dir)
    written = {
        "report.csv": export_report(report, ExportFormat.CSV, out_dir / "report.csv"),
        "report.json": export_report(report, ExportFormat.JSON, out_dir / "report.json"),
    }
    if report.grid is not None and report.mae_curves:
        written["mae_curve.csv"] = write_table_csv(
            out_dir / "mae_curve.csv",
            {"x": report.grid, **{f"mae_{name}": curve for name, curve in report.mae_curves.items()}},
        )
    if report.grid is not None and report.example_curves:
        written["estimate_example.csv"] = write_table_csv(
            out_dir / "estimate_example.csv", {"x": report.grid, **report.example_curves},
        )
    written["timing.json"] = write_json(
        out_dir / "timing.json",
        {"elapsed_seconds": report.elapsed_seconds, "replicates": report.config.replicates_M},
    )
    return written


def load_report(path: Union[str, Path]) -> ExperimentReport:
    """Re-read a JSON report written by export_report."""
    return ExperimentReport.model_validate(read_json(path))
