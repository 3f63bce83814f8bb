"""
Tests for the lowrank-varx command line.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main


def write_config(path: Path, **overrides) -> Path:
    config = {
        "experiment": "bounds_check",
        "n": 3,
        "m": 2,
        "r": 1,
        "T0": 3,
        "N_grid": [40],
        "trials_per_cell": 2,
        "noise_family": "gaussian",
        "sigma_w": 0.3,
        "master_seed": 3,
        "output_dir": str(path.parent / "results"),
        "record_timing": False,
    }
    config.update(overrides)
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def last_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestSimulateAndEstimate:
    """simulate then estimate from the written bundle."""

    def test_simulate_writes_files(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json")
        out = tmp_path / "data"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        result = last_json(capsys)
        assert result["N"] == 40
        assert result["lambda_rule"] > 0
        for name in ("X.csv", "Z.csv", "W.csv", "Sigma.csv", "bundle.json"):
            assert (out / name).exists()

    def test_estimate_from_bundle(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json")
        out = tmp_path / "data"
        main(["simulate", "--config", str(cfg), "--out", str(out)])
        capsys.readouterr()
        code = main(["estimate", "--data", str(out / "bundle.json"), "--out", str(out)])
        assert code == EXIT_OK
        result = last_json(capsys)
        assert result["method"] == "nuclear_reg"
        assert result["op_err"] >= 0.0
        assert (out / "estimate.json").exists()

    def test_estimate_noiseless_needs_lambda(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", experiment="phase_transition", noise_family=None)
        assert main(["estimate", "--config", str(cfg)]) == EXIT_CONFIG

    def test_estimate_needs_a_source(self):
        assert main(["estimate"]) == EXIT_CONFIG

    def test_inconsistent_exact_program(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json")
        assert main(["estimate", "--config", str(cfg), "--method", "nuclear_exact"]) == EXIT_NUMERICAL


class TestExperiments:
    """Experiment subcommands."""

    def test_phase_transition(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.json", experiment="phase_transition", noise_family=None, N_grid=[3, 12],
        )
        assert main(["phase-transition", "--config", str(cfg), "--trials", "2"]) == EXIT_OK
        summary = last_json(capsys)
        assert [cell["trials"] for cell in summary["cells"]] == [2, 2]
        assert (tmp_path / "results" / "phase_transition.csv").exists()

    def test_seed_override_changes_rows(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json")
        main(["bounds-check", "--config", str(cfg), "--out", str(tmp_path / "a")])
        main(["bounds-check", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"])
        first = (tmp_path / "a" / "bounds_check.csv").read_text(encoding="utf-8")
        second = (tmp_path / "b" / "bounds_check.csv").read_text(encoding="utf-8")
        assert first != second

    def test_missing_config_file(self, tmp_path):
        assert main(["bounds-check", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_invalid_config(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.json", N_grid=[40, 20])
        assert main(["bounds-check", "--config", str(cfg)]) == EXIT_CONFIG

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            main([])
