"""
Tests for the CSV and JSON file formats.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from models.schemas import Estimate, RegressionData
from utils.serialization import (
    read_bundle,
    read_json,
    read_matrix_csv,
    read_regression_csv,
    write_bundle,
    write_json,
    write_matrix_csv,
    write_plot_data,
    write_regression_csv,
)
from utils.validation import ValidationError


@pytest.fixture
def data() -> RegressionData:
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(6, 3))
    W = rng.normal(size=(6, 2)) * 1e-7
    return RegressionData(X=Z @ rng.normal(size=(3, 2)) + W, Z=Z, W=W, Sigma=np.diag([1.0, 2.0, 1.0 / 3.0]))


class TestMatrixCsv:
    """One matrix per file."""

    def test_values_survive_exactly(self, tmp_path, data):
        path = write_matrix_csv(tmp_path / "Z.csv", data.Z)
        np.testing.assert_array_equal(read_matrix_csv(path), data.Z)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "col0,col1,col2"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            read_matrix_csv(path)

    def test_non_numeric_entry(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("col0,col1\n1,x\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            read_matrix_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            read_matrix_csv(tmp_path / "absent.csv")


class TestRegressionFiles:
    """Directory of matrix files and the JSON bundle."""

    def test_directory(self, tmp_path, data):
        written = write_regression_csv(tmp_path, data)
        assert sorted(p.name for p in written) == ["Sigma.csv", "W.csv", "X.csv", "Z.csv"]
        loaded = read_regression_csv(tmp_path)
        np.testing.assert_array_equal(loaded.Sigma, data.Sigma)
        np.testing.assert_array_equal(loaded.W, data.W)

    def test_optional_matrices_absent(self, tmp_path):
        plain = RegressionData(X=np.ones((2, 1)), Z=np.eye(2))
        write_regression_csv(tmp_path, plain)
        loaded = read_regression_csv(tmp_path)
        assert loaded.W is None and loaded.Sigma is None

    def test_bundle_with_estimate(self, tmp_path, data):
        estimate = Estimate(
            theta_hat=np.full((3, 2), 0.1), lambda_used=0.25, iters=12, converged=True,
            kkt_residual=3e-7, objective=1.5, method="nuclear_reg",
        )
        path = write_bundle(tmp_path / "bundle.json", data, estimate=estimate, extra={"rank": 1})
        loaded, loaded_estimate, extra = read_bundle(path)
        np.testing.assert_array_equal(loaded.X, data.X)
        assert loaded_estimate.iters == 12
        assert loaded_estimate.lambda_used == 0.25
        assert loaded_estimate.method == "nuclear_reg"
        assert extra == {"rank": 1}

    def test_bundle_without_data(self, tmp_path):
        path = tmp_path / "bundle.json"
        path.write_text('{"rank": 1}', encoding="utf-8")
        with pytest.raises(ValidationError):
            read_bundle(path)


class TestPlotData:
    """Two-column plot files."""

    def test_format(self, tmp_path):
        path = write_plot_data(tmp_path / "p.dat", [10, 20], [0.5, 0.25], header="N rate")
        assert path.read_text(encoding="utf-8") == "# N rate\n10 0.5\n20 0.25\n"

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(ValidationError):
            write_plot_data(tmp_path / "p.dat", [1, 2], [1.0])


class TestStrictJson:
    """Non-finite values are written as null."""

    def test_non_finite_values_become_null(self, tmp_path):
        payload = {
            "slope": math.nan,
            "cells": [{"median_op_err": math.inf, "N": 10}],
            "ratios": np.array([1.5, -np.inf]),
            "rank": np.int64(2),
        }
        path = write_json(tmp_path / "summary.json", payload)
        text = path.read_text(encoding="utf-8")
        assert "NaN" not in text and "Infinity" not in text

        def reject(constant):
            raise AssertionError(f"non-standard constant {constant}")

        strict = json.loads(text, parse_constant=reject)
        assert strict == {"slope": None, "cells": [{"median_op_err": None, "N": 10}], "ratios": [1.5, None], "rank": 2}
        assert read_json(path) == strict

    def test_bundle_keeps_missing_residual_as_nan(self, tmp_path, data):
        estimate = Estimate(
            theta_hat=np.zeros((3, 2)), lambda_used=0.0, iters=0, converged=False,
            kkt_residual=math.nan, objective=0.0, method="rank_oracle",
        )
        path = write_bundle(tmp_path / "bundle.json", data, estimate=estimate)
        assert '"kkt_residual": null' in path.read_text(encoding="utf-8")
        _, loaded, _ = read_bundle(path)
        assert math.isnan(loaded.kkt_residual)
