"""Command-line entry point for the decompounding toolkit."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from core.config import settings
from core.errors import (
    DegenerateEstimateError,
    EmptyInputError,
    ExperimentError,
    InsufficientDataError,
    ParameterError,
    ResolutionError,
    StorageError,
)
from core.log import configure_logging
from models.schemas import ExperimentConfig, Interval, JumpDensityModel, TuneOn
from services.decompound import corrected_estimator
from services.gridmath import composition_table, tabulate
from services.harness import run_experiment, write_experiment_outputs
from services.simulate import nonzero_from_increments, simulate_path
from services.storage import (
    read_increments_csv,
    read_json,
    write_estimate_csv,
    write_increments_csv,
    write_json,
    write_jumps_csv,
    write_table_csv,
)
from services.wavelet import basis_by_name, positive_part

load_dotenv()

logger = logging.getLogger("decompounding")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4


def _sidecar(path: str) -> Path:
    return Path(path).with_suffix(".json")


def _load_model(path: Optional[str]) -> JumpDensityModel:
    if path is None:
        return JumpDensityModel.gaussian_laplace_mixture()
    return JumpDensityModel.model_validate(read_json(path))


# =============================================================================
# Subcommands
# =============================================================================

def cmd_simulate(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    record = simulate_path(args.theta, model, args.T, args.delta, args.seed)
    write_increments_csv(args.out, record.increments)
    n_nonzero = int((record.increments != 0).sum())
    write_json(_sidecar(args.out), {
        "delta": record.delta,
        "horizon": record.horizon,
        "theta": record.intensity_true,
        "n_nonzero": n_nonzero,
    })
    if args.jumps:
        write_jumps_csv(args.jumps, record.jump_times, record.jump_sizes)
    logger.info("Simulated %d slots, %d nonzero, written to %s", record.n_slots, n_nonzero, args.out)
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    increments = read_increments_csv(args.input)
    nonzero = nonzero_from_increments(increments)
    domain = Interval(lo=args.domain[0], hi=args.domain[1]) if args.domain else settings.domain
    estimate = corrected_estimator(
        nonzero,
        args.delta,
        args.K,
        basis_by_name(args.wavelet),
        domain,
        args.L,
        args.kappa,
        theta_override=args.theta,
        J_user=args.J,
        tune_on=TuneOn(args.tune_on),
        step=args.grid_step,
        max_workers=settings.threads,
    )
    if args.clip_negative:
        estimate = positive_part(estimate)
    write_estimate_csv(args.out, estimate)
    write_json(_sidecar(args.out), estimate.diagnostics)
    for message in estimate.diagnostics.warnings:
        logger.warning(message)
    logger.info("Estimate of order K=%d from %d nonzero increments written to %s", args.K, nonzero.count, args.out)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    values = read_json(args.config) if args.config else ExperimentConfig.reference_study().model_dump(mode="json")
    if args.replicates is not None:
        values["replicates_M"] = args.replicates
    if args.seed is not None:
        values["master_seed"] = args.seed
    config = ExperimentConfig.model_validate(values)

    def progress(fraction: float, message: str):
        logger.info("[%3.0f%%] %s", fraction * 100, message)

    basis = basis_by_name(args.wavelet)
    report = run_experiment(config, threads=args.threads, progress_callback=progress, basis=basis)
    written = write_experiment_outputs(report, args.out_dir)
    for summary in report.estimators:
        print(f"{summary.name:>8}  mean L2 {summary.mean_l2:.4e}  sd {summary.sd_l2:.4e}  ({summary.n_ok} ok)")
    for pm in report.pm_estimates:
        print(f"    p_{pm.m}  {pm.mean:.4f} (sd {pm.sd:.4f})")
    logger.info("Wrote %s", ", ".join(str(p) for p in written.values()))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    f = tabulate(_load_model(args.model), Interval(lo=args.lo, hi=args.hi), args.step)
    rows = composition_table(f, args.theta, args.deltas, args.orders, args.truncation)
    print(f"{'K':>3} {'delta':>8} {'sup error':>12} {'ratio':>8}")
    for row in rows:
        ratio = "" if row["ratio_to_previous"] is None else f"{row['ratio_to_previous']:.3f}"
        print(f"{row['K']:>3} {row['delta']:>8.4g} {row['sup_error']:>12.4e} {ratio:>8}")
    if args.out:
        write_table_csv(args.out, {key: [row[key] for row in rows] for key in rows[0]})
    return EXIT_OK


# =============================================================================
# Parser
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decompounding",
        description=f"{settings.app_name}: wavelet decompounding of compound Poisson processes",
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="Simulate a compound Poisson path")
    sim.add_argument("--theta", type=float, required=True, help="Jump intensity")
    sim.add_argument("--T", type=float, required=True, help="Observation horizon")
    sim.add_argument("--delta", type=float, required=True, help="Sampling step")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--model", help="Jump density JSON (default: the 0.95/0.05 Gaussian-Laplace mixture)")
    sim.add_argument("--out", required=True, help="Increments CSV")
    sim.add_argument("--jumps", help="Optional CSV of jump times and sizes")
    sim.set_defaults(handler=cmd_simulate)

    est = commands.add_parser("estimate", help="Estimate the jump density from increments")
    est.add_argument("--input", required=True, help="Increments CSV")
    est.add_argument("--delta", type=float, required=True)
    est.add_argument("--K", type=int, default=1, help="Correction order")
    est.add_argument("--kappa", type=float, default=settings.kappa)
    est.add_argument("--L", type=int, default=settings.level_L, help="Binning level")
    est.add_argument("--J", type=int, default=settings.resolution_J, help="Requested resolution")
    est.add_argument("--domain", type=float, nargs=2, metavar=("LO", "HI"),
                     help="Estimation domain (default: from settings)")
    est.add_argument("--wavelet", default=settings.wavelet, help="Orthogonal wavelet name")
    est.add_argument("--grid-step", type=float, default=settings.grid_step)
    est.add_argument("--theta", type=float, default=None, help="Known intensity (skips the plug-in)")
    est.add_argument("--tune-on", choices=[t.value for t in TuneOn], default=settings.tune_on.value)
    est.add_argument("--clip-negative", action="store_true", help="Clip negative values for display")
    est.add_argument("--out", required=True, help="Estimate CSV (x, f_hat)")
    est.set_defaults(handler=cmd_estimate)

    exp = commands.add_parser("experiment", help="Run a Monte Carlo experiment")
    exp.add_argument("--config", help="ExperimentConfig JSON (default: the reference study)")
    exp.add_argument("--replicates", type=int, default=None)
    exp.add_argument("--seed", type=int, default=None)
    exp.add_argument("--threads", type=int, default=settings.threads)
    exp.add_argument("--wavelet", default=settings.wavelet, help="Orthogonal wavelet name")
    exp.add_argument("--out-dir", default=settings.output_dir)
    exp.set_defaults(handler=cmd_experiment)

    val = commands.add_parser("validate", help="Print composition errors of the truncated inverse")
    val.add_argument("--theta", type=float, default=1.0)
    val.add_argument("--deltas", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    val.add_argument("--orders", type=int, nargs="+", default=[0, 1, 2])
    val.add_argument("--truncation", type=int, default=20)
    val.add_argument("--step", type=float, default=0.01)
    val.add_argument("--lo", type=float, default=-30.0)
    val.add_argument("--hi", type=float, default=30.0)
    val.add_argument("--model", help="Jump density JSON")
    val.add_argument("--out", help="Optional CSV of the table")
    val.set_defaults(handler=cmd_validate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except StorageError as e:
        logger.error("I/O error (%s): %s", e.path, e)
        return EXIT_IO
    except (ExperimentError, InsufficientDataError, DegenerateEstimateError, EmptyInputError) as e:
        logger.error("%s", e)
        return EXIT_DATA
    except (ValidationError, ParameterError, ResolutionError, ValueError) as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
