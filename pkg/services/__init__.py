"""Service modules: simulation, estimation, certification and experiments."""

from services.experiment_service import ExperimentRunner
from services.estimators import (
    InfeasibleProgramError,
    least_squares,
    nuclear_reg_solve,
    nuclear_min_exact,
)
from services.theory_lab import build_cert_report, predict_bounds
from services.varx_simulator import collect_repeated, generate_system

__all__ = [
    "ExperimentRunner",
    "InfeasibleProgramError",
    "least_squares",
    "nuclear_reg_solve",
    "nuclear_min_exact",
    "build_cert_report",
    "predict_bounds",
    "collect_repeated",
    "generate_system",
]
