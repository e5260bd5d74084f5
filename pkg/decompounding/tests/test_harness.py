import csv
import json

import numpy as np
import pytest

from core.errors import ExperimentError
from models.schemas import ExperimentConfig, ExportFormat, ReplicateRecord
from services.harness import (
    REPORT_COLUMNS,
    estimate_pm_frequencies,
    export_report,
    load_report,
    replicate_seed,
    run_experiment,
    run_replicate,
    write_experiment_outputs,
)
from services.simulate import simulate_path


@pytest.fixture(scope="module")
def small_report():
    config = ExperimentConfig.reference_study(horizon_T=500.0, replicates_M=4, master_seed=7)
    return run_experiment(config)


def test_replicate_seed_is_pure():
    a, b = replicate_seed(3, 5), replicate_seed(3, 5)
    assert np.array_equal(a.generate_state(4), b.generate_state(4))
    assert not np.array_equal(replicate_seed(3, 5).generate_state(4), replicate_seed(3, 6).generate_state(4))


def test_replicate_runs_every_estimator_on_one_path(small_config):
    record = run_replicate(small_config, 2)
    path = simulate_path(
        small_config.theta, small_config.model, small_config.horizon_T, small_config.delta, replicate_seed(7, 2),
    )
    assert record.ok
    assert record.path_checksum == path.checksum()
    assert sorted(record.losses) == sorted(small_config.estimator_names)
    assert all(loss > 0 for loss in record.losses.values())
    assert sum(record.jump_count_tally.values()) == record.n_nonzero


def test_replicate_keeps_estimator_warnings(small_config):
    record = run_replicate(small_config.model_copy(update={"L": 5}), 0)
    assert record.ok
    assert any(w.startswith("resolution capped at the binning level L=5") for w in record.warnings)
    assert len(record.warnings) == len(set(record.warnings))


def test_replicate_is_deterministic(small_config):
    a, b = run_replicate(small_config, 1), run_replicate(small_config, 1)
    assert a.model_dump() == b.model_dump()


def test_zero_intensity_replicate_fails(small_config):
    config = small_config.model_copy(update={"theta": 0.0})
    record = run_replicate(config, 0)
    assert not record.ok
    assert record.failure
    assert record.losses == {}


def test_all_failed_experiment_raises(small_config):
    with pytest.raises(ExperimentError):
        run_experiment(small_config.model_copy(update={"theta": 0.0}))


def test_report_statistics(small_report):
    assert small_report.n_ok == 4
    assert small_report.n_failed == 0
    assert [s.name for s in small_report.estimators] == ["oracle", "K0", "K1", "K2", "K3"]
    for summary in small_report.estimators:
        losses = np.array(summary.losses)
        assert summary.mean_l2 == pytest.approx(losses.mean(), rel=1e-12)
        assert summary.sd_l2 == pytest.approx(losses.std(ddof=1), rel=1e-12)
        assert summary.se_l2 == pytest.approx(summary.sd_l2 / 2.0, rel=1e-12)
    assert small_report.sd_defined
    assert [r.index for r in small_report.replicates] == [0, 1, 2, 3]
    assert small_report.J_effective_min <= small_report.J_effective_max <= 8


def test_report_curves(small_report):
    assert small_report.grid.size == 1201
    assert set(small_report.mae_curves) == {"oracle", "K0", "K1", "K2", "K3"}
    assert set(small_report.example_curves) == {"f", "oracle", "K0", "K1", "K2", "K3"}
    assert all(np.all(curve >= 0) for curve in small_report.mae_curves.values())
    assert all(r.curves is None for r in small_report.replicates)


def test_report_compares_with_reference_losses(small_report):
    ratios = small_report.oracle_ratios
    oracle = small_report.estimator("oracle").mean_l2
    assert ratios["oracle"] == pytest.approx(1.0)
    assert ratios["K1"] == pytest.approx(small_report.estimator("K1").mean_l2 / oracle)
    assert any(note.startswith("mean L2 losses are") for note in small_report.notes)
    assert any(note.startswith("reference loss ratios to the oracle") for note in small_report.notes)


def test_report_without_reference_losses(small_config):
    report = run_experiment(small_config.model_copy(update={"reference_losses": None, "replicates_M": 2}))
    assert set(report.oracle_ratios) == {"oracle", "K0", "K1", "K2", "K3"}
    assert not any("reference" in note for note in report.notes)


def test_warnings_are_tallied_in_notes(small_config):
    report = run_experiment(small_config.model_copy(update={"L": 5, "replicates_M": 2}))
    assert any("replicate(s) warned: resolution capped" in note for note in report.notes)


def test_paired_comparisons(small_report):
    pairs = [(c.first, c.second) for c in small_report.comparisons]
    assert ("oracle", "K1") in pairs
    assert ("K1", "K0") in pairs
    comparison = next(c for c in small_report.comparisons if (c.first, c.second) == ("K1", "K0"))
    diff = np.array(small_report.estimator("K1").losses) - np.array(small_report.estimator("K0").losses)
    assert comparison.mean_difference == pytest.approx(diff.mean(), rel=1e-12)


def test_single_replicate_report(small_config):
    report = run_experiment(small_config.model_copy(update={"replicates_M": 1}))
    record = report.replicates[0]
    assert not report.sd_defined
    for summary in report.estimators:
        assert summary.sd_l2 == 0.0
        assert summary.losses == [record.losses[summary.name]]


def test_thread_count_does_not_change_the_report(small_config, tmp_path):
    one = run_experiment(small_config, threads=1)
    three = run_experiment(small_config, threads=3)
    export_report(one, ExportFormat.JSON, tmp_path / "one.json")
    export_report(three, ExportFormat.JSON, tmp_path / "three.json")
    assert (tmp_path / "one.json").read_bytes() == (tmp_path / "three.json").read_bytes()


def test_progress_reaches_one(small_config):
    seen = []
    run_experiment(small_config, threads=2, progress_callback=lambda fraction, message: seen.append(fraction))
    assert len(seen) == small_config.replicates_M
    assert max(seen) == pytest.approx(1.0)


def _record(index, tally) -> ReplicateRecord:
    return ReplicateRecord(
        index=index, ok=True, path_checksum="x", n_nonzero=sum(tally.values()), n_jumps=0, jump_count_tally=tally,
    )


def test_pm_frequencies_pool_then_average():
    records = [_record(0, {1: 9, 2: 1}), _record(1, {1: 7, 2: 2, 3: 1})]
    p1, p2, p3 = estimate_pm_frequencies(records)
    assert p1.mean == pytest.approx(0.8)
    assert p2.mean == pytest.approx(0.15)
    assert p3.mean == pytest.approx(0.05)
    assert p1.sd == pytest.approx(np.std([0.9, 0.7], ddof=1))
    assert p1.se == pytest.approx(p1.sd / np.sqrt(2))


def test_pm_frequencies_for_rare_jumps(mixture):
    config = ExperimentConfig(
        theta=1.0, delta=1e-4, horizon_T=100.0, model=mixture, K_list=[0], replicates_M=1, master_seed=3,
    )
    record = run_replicate(config, 0)
    p1 = estimate_pm_frequencies([record])[0]
    assert p1.mean >= 0.999


def test_config_validation(mixture):
    with pytest.raises(ValueError):
        ExperimentConfig(theta=1.0, delta=0.1, horizon_T=100.0, model=mixture, K_list=[])
    with pytest.raises(ValueError):
        ExperimentConfig(theta=1.0, delta=0.1, horizon_T=100.0, model=mixture, K_list=[1, 1])
    with pytest.raises(ValueError):
        ExperimentConfig(theta=1.0, delta=0.1, horizon_T=100.0, model=mixture, K_list=[0], replicates_M=0)
    config = ExperimentConfig(theta=1.0, delta=0.1, horizon_T=100.0, model=mixture, K_list=[2, 0])
    assert config.K_list == [0, 2]


def test_csv_export_columns(small_report, tmp_path):
    path = export_report(small_report, "csv", tmp_path / "report.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == REPORT_COLUMNS == ["name", "mean_l2", "sd_l2", "n_ok", "n_failed"]
    assert [row[0] for row in rows[1:]] == ["oracle", "K0", "K1", "K2", "K3"]
    assert float(rows[1][1]) == pytest.approx(small_report.estimators[0].mean_l2, rel=1e-12)


def test_json_round_trip(small_report, tmp_path):
    path = export_report(small_report, ExportFormat.JSON, tmp_path / "report.json")
    loaded = load_report(path)
    assert loaded.model_dump() == small_report.model_dump()
    payload = json.loads(path.read_text())
    assert payload["config"]["K_list"] == [0, 1, 2, 3]
    assert len(payload["replicates"]) == 4


def test_experiment_outputs(small_report, tmp_path):
    written = write_experiment_outputs(small_report, tmp_path / "out")
    assert set(written) == {"report.csv", "report.json", "mae_curve.csv", "estimate_example.csv", "timing.json"}
    with open(written["mae_curve.csv"], newline="") as f:
        header = next(csv.reader(f))
    assert header == ["x", "mae_oracle", "mae_K0", "mae_K1", "mae_K2", "mae_K3"]
    timing = json.loads(written["timing.json"].read_text())
    assert timing["elapsed_seconds"] > 0
    assert "elapsed" not in written["report.json"].read_text()
