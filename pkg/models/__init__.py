"""Data models and schemas for lowrank-varx-id."""

from models.schemas import (
    SvdFactors,
    SubspaceFrame,
    LqSplit,
    SystemModel,
    DistSpec,
    Trajectory,
    RegressionData,
    SolverConfig,
    Estimate,
    WeakRipEstimate,
    CurvatureEstimate,
    CovarianceDeviation,
    ThresholdCheck,
    ConeCheck,
    BoundParams,
    CertReport,
    ExperimentConfig,
    TrialRecord,
    CellResult,
    ToolResult,
    TOOL_DEFINITIONS,
)

__all__ = [
    "SvdFactors",
    "SubspaceFrame",
    "LqSplit",
    "SystemModel",
    "DistSpec",
    "Trajectory",
    "RegressionData",
    "SolverConfig",
    "Estimate",
    "WeakRipEstimate",
    "CurvatureEstimate",
    "CovarianceDeviation",
    "ThresholdCheck",
    "ConeCheck",
    "BoundParams",
    "CertReport",
    "ExperimentConfig",
    "TrialRecord",
    "CellResult",
    "ToolResult",
    "TOOL_DEFINITIONS",
]
