"""Utility modules for lowrank-varx-id.

``utils.matrix_ops`` and ``utils.serialization`` depend on ``models`` and
are imported directly by their callers.
"""

from utils.logger import setup_logger, set_package_level
from utils.seeding import derive_seed, make_rng
from utils.validation import (
    validate_positive_int,
    validate_real,
    validate_matrix,
    validate_choice,
    validate_increasing,
    ValidationError,
)

__all__ = [
    "setup_logger",
    "set_package_level",
    "derive_seed",
    "make_rng",
    "validate_positive_int",
    "validate_real",
    "validate_matrix",
    "validate_choice",
    "validate_increasing",
    "ValidationError",
]
