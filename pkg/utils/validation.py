"""
Input validation utilities for lowrank-varx-id.

Every public operation checks its contract here before touching numpy,
so bad shapes, non-finite entries and out-of-range parameters surface as
a single exception type that the CLI and the tool handler know how to
report.
"""

from __future__ import annotations

import math
from typing import Any, Iterable

import numpy as np


class ValidationError(ValueError):
    """Raised when validation fails."""
    pass


def validate_positive_int(
    value: int,
    name: str,
    min_val: int = 0,
    max_val: int | None = None,
) -> None:
    """Validate integer is positive and within bounds.

    Args:
        value: Integer value to validate
        name: Parameter name for error messages
        min_val: Minimum allowed value (inclusive)
        max_val: Maximum allowed value (inclusive), None for no limit

    Raises:
        ValidationError: If value is out of range

    Example:
        >>> validate_positive_int(10, "T0", min_val=2)
        >>> validate_positive_int(-1, "N", min_val=1)  # Raises ValidationError
    """
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError(f"{name} must be an integer, got {type(value).__name__}")

    if value < min_val:
        raise ValidationError(f"{name} must be >= {min_val}, got {value}")

    if max_val is not None and value > max_val:
        raise ValidationError(f"{name} must be <= {max_val}, got {value}")


def validate_real(
    value: float,
    name: str,
    min_val: float | None = None,
    max_val: float | None = None,
    strict_min: bool = False,
) -> None:
    """Validate a finite real number within optional bounds.

    Args:
        value: Number to validate
        name: Parameter name for error messages
        min_val: Lower bound, None for no bound
        max_val: Upper bound (inclusive), None for no bound
        strict_min: If True the lower bound is exclusive

    Raises:
        ValidationError: If value is not a finite real or out of range
    """
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise ValidationError(f"{name} must be a real number, got {type(value).__name__}")

    if not math.isfinite(float(value)):
        raise ValidationError(f"{name} must be finite, got {value}")

    if min_val is not None:
        if strict_min and value <= min_val:
            raise ValidationError(f"{name} must be > {min_val}, got {value}")
        if not strict_min and value < min_val:
            raise ValidationError(f"{name} must be >= {min_val}, got {value}")

    if max_val is not None and value > max_val:
        raise ValidationError(f"{name} must be <= {max_val}, got {value}")


def validate_matrix(
    matrix: Any,
    name: str,
    shape: tuple[int | None, int | None] | None = None,
) -> np.ndarray:
    """Validate and coerce a dense real matrix.

    Args:
        matrix: Array-like with two dimensions
        name: Parameter name for error messages
        shape: Expected (rows, cols); None entries are unconstrained

    Returns:
        The matrix as a float64 ndarray

    Raises:
        ValidationError: If the input is not a finite 2-D matrix of the
            expected shape
    """
    try:
        array = np.asarray(matrix, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{name} must be a real matrix: {e}") from e

    if array.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {array.shape}")

    if array.shape[0] < 1 or array.shape[1] < 1:
        raise ValidationError(f"{name} must have at least one row and column, got {array.shape}")

    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite entries")

    if shape is not None:
        for axis, expected in enumerate(shape):
            if expected is not None and array.shape[axis] != expected:
                raise ValidationError(
                    f"{name} has shape {array.shape}, expected "
                    f"{tuple('*' if s is None else s for s in shape)}"
                )
    return array


def validate_choice(value: str, name: str, choices: Iterable[str]) -> None:
    """Validate a string belongs to a fixed set.

    Args:
        value: Candidate value
        name: Parameter name for error messages
        choices: Allowed values

    Raises:
        ValidationError: If value is not one of choices
    """
    allowed = tuple(choices)
    if value not in allowed:
        raise ValidationError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")


def validate_increasing(values: Iterable[int], name: str) -> None:
    """Validate a sequence of integers is strictly increasing and non-empty.

    Raises:
        ValidationError: If the sequence is empty or not strictly increasing
    """
    items = list(values)
    if not items:
        raise ValidationError(f"{name} must not be empty")
    for earlier, later in zip(items, items[1:]):
        if later <= earlier:
            raise ValidationError(f"{name} must be strictly increasing, got {items}")
