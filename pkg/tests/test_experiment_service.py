"""
Tests for the experiment harness.

Small grids only; the full-size acceptance runs live in test_acceptance.py.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from models.schemas import CellResult, ExperimentConfig, TrialRecord
from services.experiment_service import (
    RIP_COLUMNS,
    WORKERS_ENV,
    ExperimentRunner,
    aggregate_cell,
    fit_slope,
    worker_count,
)
from utils.validation import ValidationError


def make_config(tmp_path: Path, experiment: str, **overrides) -> ExperimentConfig:
    settings = {
        "experiment": experiment,
        "n": 3,
        "m": 2,
        "r": 1,
        "T0": 3,
        "N_grid": (3, 12),
        "trials_per_cell": 3,
        "noise_family": None if experiment == "phase_transition" else "gaussian",
        "sigma_w": 0.5,
        "master_seed": 17,
        "output_dir": str(tmp_path / experiment),
        "record_timing": False,
    }
    settings.update(overrides)
    return ExperimentConfig(**settings)


def read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def record(trial: int, **fields) -> TrialRecord:
    values = {
        "experiment": "bounds_check", "N": 10, "trial": trial, "seed": trial, "success": True,
        "op_err": 1.0, "frob_err": 1.0, "nuc_err": 1.0, "lam": 0.1, "kkt_residual": 0.0,
        "premise_held": True, "bound": 2.0, "violated": False, "wall_ms": 0,
    }
    values.update(fields)
    return TrialRecord(**values)


class TestWorkerCount:
    """Worker count from the environment."""

    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert worker_count() == 1

    def test_reads_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "4")
        assert worker_count() == 4

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_rejects_bad_values(self, monkeypatch, raw):
        monkeypatch.setenv(WORKERS_ENV, raw)
        with pytest.raises(ValidationError):
            worker_count()


class TestAggregation:
    """Per-N reduction and slope fitting."""

    def test_unconditioned_cell(self):
        records = [record(2, success=False, op_err=3.0), record(0, op_err=1.0), record(1, op_err=2.0, violated=True)]
        cell = aggregate_cell(10, records, conditioned=False)
        assert cell.success_rate == pytest.approx(2 / 3)
        assert cell.median_op_err == 2.0
        assert cell.bound_violation_rate == pytest.approx(1 / 3)
        assert cell.trials == 3
        assert cell.excluded_trials == 0

    def test_conditioned_cell_excludes_failed_premise(self):
        records = [
            record(0, violated=True),
            record(1, premise_held=False, violated=True),
            record(2),
            record(3, premise_held=False),
        ]
        cell = aggregate_cell(10, records, conditioned=True)
        assert cell.bound_violation_rate == pytest.approx(0.5)
        assert cell.excluded_trials == 2

    def test_no_eligible_trials(self):
        cell = aggregate_cell(10, [record(0, premise_held=False)], conditioned=True)
        assert cell.bound_violation_rate == 0.0
        assert cell.excluded_trials == 1

    def test_median_skips_missing_errors(self):
        cell = aggregate_cell(10, [record(0, op_err=math.nan), record(1, op_err=4.0)], conditioned=False)
        assert cell.median_op_err == 4.0

    def test_fit_slope(self):
        cells = [
            CellResult(N=N, success_rate=1.0, median_op_err=3.0 / math.sqrt(N), median_frob_err=1.0,
                       bound_violation_rate=0.0, wall_ms=0)
            for N in (10, 40, 160, 640)
        ]
        assert fit_slope(cells) == pytest.approx(-0.5)

    def test_fit_slope_needs_two_points(self):
        cell = CellResult(N=10, success_rate=1.0, median_op_err=1.0, median_frob_err=1.0,
                          bound_violation_rate=0.0, wall_ms=0)
        assert math.isnan(fit_slope([cell]))


class TestPhaseTransition:
    """Noiseless recovery sweep."""

    def test_success_jumps_with_N(self, tmp_path):
        cells = ExperimentRunner(make_config(tmp_path, "phase_transition"), workers=1).run_phase_transition()
        rates = {cell.N: cell.success_rate for cell in cells}
        assert rates[3] == 0.0
        assert rates[12] == 1.0

    def test_outputs_written(self, tmp_path):
        cfg = make_config(tmp_path, "phase_transition")
        summary = ExperimentRunner(cfg, workers=1).run()
        out = Path(cfg.output_dir)
        rows = read_rows(out / "phase_transition.csv")
        assert len(rows) == 6
        assert list(rows[0]) == list(TrialRecord.COLUMNS)
        assert {row["wall_ms"] for row in rows} == {"0"}
        assert len(read_rows(out / "phase_transition_cells.csv")) == 2
        plot = (out / "phase_transition.dat").read_text(encoding="utf-8").splitlines()
        assert plot[0] == "# N success_rate"
        assert plot[1].split()[0] == "3"
        assert json.loads((out / "summary.json").read_text(encoding="utf-8")) == summary

    def test_reproducible_bytes(self, tmp_path):
        first = make_config(tmp_path / "a", "phase_transition")
        second = make_config(tmp_path / "b", "phase_transition")
        ExperimentRunner(first, workers=1).run()
        ExperimentRunner(second, workers=1).run()
        for name in ("phase_transition.csv", "phase_transition_cells.csv", "phase_transition.dat"):
            assert (Path(first.output_dir) / name).read_bytes() == (Path(second.output_dir) / name).read_bytes()

    def test_replay_from_recorded_seed(self, tmp_path):
        cfg = make_config(tmp_path, "phase_transition")
        runner = ExperimentRunner(cfg, workers=1)
        runner.run()
        row = read_rows(Path(cfg.output_dir) / "phase_transition.csv")[-1]
        replayed = runner.replay_trial(int(row["N"]), int(row["seed"]))
        assert replayed.as_row()[4:] == [row[c] for c in TrialRecord.COLUMNS[4:]]

    def test_noise_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            make_config(tmp_path, "phase_transition", noise_family="gaussian")


class TestRegularizedExperiments:
    """Noisy sweeps."""

    def test_error_scaling_slope_is_negative(self, tmp_path):
        cfg = make_config(tmp_path, "error_scaling", n=2, m=1, T0=2, N_grid=(50, 200, 800))
        cells, slope = ExperimentRunner(cfg, workers=1).run_error_scaling()
        assert slope < 0.0
        assert all(cell.bound_violation_rate == 0.0 for cell in cells)
        rows = read_rows(Path(cfg.output_dir) / "error_scaling.csv")
        assert all(math.isfinite(float(row["bound"])) for row in rows)

    def test_bounds_check_has_no_violations(self, tmp_path):
        cfg = make_config(tmp_path, "bounds_check", N_grid=(40, 160))
        cells = ExperimentRunner(cfg, workers=1).run_bounds_check()
        for cell in cells:
            assert cell.bound_violation_rate == 0.0
            assert cell.trials == 3

    def test_weak_low_rank_runs(self, tmp_path):
        cfg = make_config(tmp_path, "weak_low_rank", N_grid=(60,), trials_per_cell=2, q=0.5, radius=2.0)
        cells = ExperimentRunner(cfg, workers=1).run_weak_low_rank()
        assert cells[0].bound_violation_rate == 0.0
        assert math.isfinite(cells[0].median_op_err)

    def test_error_scaling_needs_three_octaves(self, tmp_path):
        with pytest.raises(ValidationError):
            make_config(tmp_path, "error_scaling", N_grid=(50, 100, 399))
        assert make_config(tmp_path, "error_scaling", N_grid=(50, 400)).N_grid == (50, 400)

    def test_trial_experiments_share_one_schema(self, tmp_path):
        noiseless = make_config(tmp_path, "phase_transition", N_grid=(12,), trials_per_cell=1)
        noisy = make_config(tmp_path, "bounds_check", N_grid=(40,), trials_per_cell=1)
        ExperimentRunner(noiseless, workers=1).run()
        ExperimentRunner(noisy, workers=1).run()
        for cfg in (noiseless, noisy):
            rows = read_rows(Path(cfg.output_dir) / f"{cfg.experiment}.csv")
            assert list(rows[0]) == list(TrialRecord.COLUMNS)
            assert rows[0]["experiment"] == cfg.experiment

    def test_zero_noise_level_rejected(self, tmp_path):
        cfg = make_config(tmp_path, "bounds_check", sigma_w=0.0)
        with pytest.raises(ValidationError):
            ExperimentRunner(cfg, workers=1)


class TestRipProfile:
    """Weak-RIP profile over N."""

    def test_profile_rows(self, tmp_path):
        cfg = make_config(tmp_path, "rip_profile", N_grid=(20, 80), rip_trials=100)
        profile = ExperimentRunner(cfg, workers=1).run_rip_profile()
        assert len(profile) == 6
        for N in (20, 80):
            deltas = [est.delta_hat for n_value, est in profile if n_value == N]
            assert deltas == sorted(deltas)
        rows = read_rows(Path(cfg.output_dir) / "rip_profile.csv")
        assert len(rows) == 6
        assert list(rows[0]) == list(RIP_COLUMNS)
        assert rows[0]["order"] == "1"

    def test_singular_covariance_rejected(self, tmp_path):
        cfg = make_config(tmp_path, "rip_profile", noise_family=None, T0=2, rip_trials=100)
        with pytest.raises(ValidationError):
            ExperimentRunner(cfg, workers=1).run_rip_profile()


@pytest.mark.slow
class TestParallelism:
    """Process pool output matches the in-process run."""

    def test_worker_count_does_not_change_output(self, tmp_path):
        serial = make_config(tmp_path / "serial", "phase_transition")
        parallel = replace(serial, output_dir=str(tmp_path / "parallel"))
        ExperimentRunner(serial, workers=1).run()
        ExperimentRunner(parallel, workers=2).run()
        name = "phase_transition.csv"
        assert (Path(serial.output_dir) / name).read_bytes() == (Path(parallel.output_dir) / name).read_bytes()
