"""
File formats for regression data, estimates and reports.

Matrices go to CSV (one file per matrix, header ``col0,col1,...``,
17 significant digits) or to a single JSON bundle. Both round-trip
float64 values exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from models.schemas import Estimate, RegressionData, json_safe
from utils.logger import setup_logger
from utils.validation import ValidationError, validate_matrix

logger = setup_logger(__name__)

_MATRIX_NAMES = ("X", "Z", "W", "Sigma")


def format_float(value: float) -> str:
    return format(float(value), ".17g")


def write_matrix_csv(path: str | Path, matrix: np.ndarray) -> Path:
    """Write one matrix with a ``col0,col1,...`` header row."""
    M = validate_matrix(matrix, "matrix")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([f"col{j}" for j in range(M.shape[1])])
        for row in M:
            writer.writerow([format_float(v) for v in row])
    return path


def read_matrix_csv(path: str | Path) -> np.ndarray:
    """Read a matrix written by write_matrix_csv.

    Raises:
        ValidationError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as e:
        raise ValidationError(f"Cannot read matrix file {path}: {e}") from e
    if len(rows) < 2:
        raise ValidationError(f"Matrix file {path} has no data rows")
    header, body = rows[0], rows[1:]
    if header != [f"col{j}" for j in range(len(header))]:
        raise ValidationError(f"Matrix file {path} has an unexpected header")
    try:
        values = [[float(v) for v in row] for row in body]
    except ValueError as e:
        raise ValidationError(f"Matrix file {path} has a non-numeric entry: {e}") from e
    if any(len(row) != len(header) for row in values):
        raise ValidationError(f"Matrix file {path} has ragged rows")
    return validate_matrix(values, path.name)


def write_regression_csv(directory: str | Path, data: RegressionData) -> list[Path]:
    """Write X.csv, Z.csv and, when present, W.csv and Sigma.csv."""
    directory = Path(directory)
    written = []
    for name in _MATRIX_NAMES:
        matrix = getattr(data, name)
        if matrix is not None:
            written.append(write_matrix_csv(directory / f"{name}.csv", matrix))
    logger.debug(f"Wrote {len(written)} matrix files to {directory}")
    return written


def read_regression_csv(directory: str | Path) -> RegressionData:
    directory = Path(directory)
    matrices: dict[str, np.ndarray | None] = {}
    for name in _MATRIX_NAMES:
        path = directory / f"{name}.csv"
        if name in ("X", "Z") or path.exists():
            matrices[name] = read_matrix_csv(path)
        else:
            matrices[name] = None
    return RegressionData(**matrices)


def write_json(path: str | Path, payload: dict[str, Any]) -> Path:
    """Write a strict JSON document; floats keep their shortest exact repr
    and non-finite values become null.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(json_safe(payload), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def read_json(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ValidationError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ValidationError(f"{path} must contain a JSON object")
    return payload


def write_bundle(
    path: str | Path,
    data: RegressionData,
    estimate: Estimate | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write data (and optionally an estimate with its solver metadata) as one JSON object."""
    payload: dict[str, Any] = {"data": data.to_dict()}
    if estimate is not None:
        payload["estimate"] = estimate.to_dict()
    if extra:
        payload.update(extra)
    return write_json(path, payload)


def read_bundle(path: str | Path) -> tuple[RegressionData, Estimate | None, dict[str, Any]]:
    """Read a bundle written by write_bundle.

    Returns:
        (data, estimate or None, remaining top-level fields)

    Raises:
        ValidationError: If the bundle is malformed
    """
    payload = read_json(path)
    if "data" not in payload:
        raise ValidationError(f"Bundle {path} has no 'data' entry")
    try:
        data = RegressionData.from_dict(payload.pop("data"))
        raw_estimate = payload.pop("estimate", None)
        estimate = None if raw_estimate is None else Estimate.from_dict(raw_estimate)
    except KeyError as e:
        raise ValidationError(f"Bundle {path} is missing field {e}") from e
    return data, estimate, payload


def write_rows_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    """Write pre-formatted string rows under a header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def write_plot_data(path: str | Path, xs: Sequence[float], ys: Sequence[float], header: str = "") -> Path:
    """Two whitespace-separated columns, one point per line."""
    if len(xs) != len(ys):
        raise ValidationError(f"Plot columns differ in length: {len(xs)} vs {len(ys)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {header}"] if header else []
    lines.extend(f"{format_float(x)} {format_float(y)}" for x, y in zip(xs, ys))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
