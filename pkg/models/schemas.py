"""
Data models and MCP tool schemas for lowrank-varx-id.

This module contains:
- Dataclasses for the linear-algebra foundation (SvdFactors, SubspaceFrame)
- The VARX system, excitation and regression data types
- Solver configuration and estimate diagnostics
- Certification results (weak RIP, curvature, cone checks, reports)
- Experiment configuration and per-cell results
- MCP Tool definitions with input schemas
- Response models for consistent tool responses
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Literal

import numpy as np
from mcp.types import Tool

from utils.validation import (
    ValidationError,
    validate_choice,
    validate_increasing,
    validate_matrix,
    validate_positive_int,
    validate_real,
)

NormKind = Literal["nuclear", "operator", "frobenius"]
ProjectionTarget = Literal["M", "Mbar", "MbarPerp"]
LeastSquaresMode = Literal["pooled_final_state", "stacked_trajectory"]

DIST_FAMILIES = ("gaussian", "uniform", "rademacher")
EXPERIMENTS = ("phase_transition", "error_scaling", "bounds_check", "rip_profile", "weak_low_rank")


def _frozen(array: Any) -> np.ndarray:
    """Copy into a read-only float array."""
    out = np.array(array, dtype=float, copy=True)
    out.setflags(write=False)
    return out


# =============================================================================
# LINEAR ALGEBRA FOUNDATION
# =============================================================================

@dataclass(frozen=True, eq=False)
class SvdFactors:
    """Thin singular value decomposition ``M = left @ diag(singulars) @ right.T``.

    Args:
        left: d1 x d orthonormal columns
        singulars: non-increasing non-negative values, d = min(d1, d2)
        right: d2 x d orthonormal columns
    """
    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "left", _frozen(self.left))
        object.__setattr__(self, "singulars", _frozen(self.singulars))
        object.__setattr__(self, "right", _frozen(self.right))

    def reconstruct(self) -> np.ndarray:
        """Multiply the factors back together."""
        return (self.left * self.singulars) @ self.right.T


@dataclass(frozen=True, eq=False)
class SubspaceFrame:
    """Singular subspaces of the true coefficient matrix.

    ``col_basis`` spans U (the top-r left singular vectors of Θ*, living in
    R^(n+m)) and ``row_basis`` spans V (top-r right singular vectors, R^n).
    The projectors onto M, M̄ and M̄⊥ are built from these two bases.
    """
    col_basis: np.ndarray
    row_basis: np.ndarray
    rank: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "col_basis", _frozen(self.col_basis))
        object.__setattr__(self, "row_basis", _frozen(self.row_basis))

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of the matrices the frame projects."""
        return self.col_basis.shape[0], self.row_basis.shape[0]


@dataclass(frozen=True, eq=False)
class LqSplit:
    """Threshold split of a weakly low-rank matrix.

    Args:
        s_size: number of singular values strictly above tau
        theta_prime: the matrix keeping only singular values <= tau
        tail_singulars: the singular values kept in theta_prime
        q: ball exponent in [0, 1]
        tau: threshold
        radius: sum of sigma_j ** q (the smallest admissible R_q)
    """
    s_size: int
    theta_prime: np.ndarray
    tail_singulars: np.ndarray
    q: float
    tau: float
    radius: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta_prime", _frozen(self.theta_prime))
        object.__setattr__(self, "tail_singulars", _frozen(self.tail_singulars))

    @property
    def tail_nuclear(self) -> float:
        return float(np.sum(self.tail_singulars))

    @property
    def nuclear_bound(self) -> float:
        """tau^(1-q) * R_q."""
        return self.tau ** (1.0 - self.q) * self.radius

    @property
    def size_bound(self) -> float:
        """tau^(-q) * R_q."""
        return self.tau ** (-self.q) * self.radius

    def holds(self, rel_tol: float = 1e-12) -> bool:
        """Both threshold inequalities, with floating-point slack only."""
        nuclear_ok = self.tail_nuclear <= self.nuclear_bound * (1.0 + rel_tol) + 1e-300
        size_ok = self.s_size <= self.size_bound * (1.0 + rel_tol)
        return bool(nuclear_ok and size_ok)


# =============================================================================
# SYSTEMS, EXCITATION AND DATA
# =============================================================================

@dataclass(frozen=True, eq=False)
class SystemModel:
    """VARX(1) system ``x(t+1) = A x(t) + B u(t) + E w(t)``.

    Args:
        A: state transition, state_dim x state_dim
        B: input matrix, state_dim x m
        rank_r: numerical rank of Θ* = [A, B]^T
        sigma_w: sub-Gaussian parameter of the noise
        noise_gain: E, state_dim x noise_dim; None means identity
    """
    A: np.ndarray
    B: np.ndarray
    rank_r: int
    sigma_w: float = 0.0
    noise_gain: np.ndarray | None = None

    def __post_init__(self) -> None:
        A = validate_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got {A.shape}")
        B = validate_matrix(self.B, "B", shape=(A.shape[0], None))
        validate_positive_int(self.rank_r, "rank_r", min_val=0, max_val=A.shape[0])
        validate_real(self.sigma_w, "sigma_w", min_val=0.0)
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        if self.noise_gain is not None:
            gain = validate_matrix(self.noise_gain, "noise_gain", shape=(A.shape[0], None))
            object.__setattr__(self, "noise_gain", _frozen(gain))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def noise_dim(self) -> int:
        return self.n if self.noise_gain is None else self.noise_gain.shape[1]

    @property
    def gain(self) -> np.ndarray:
        """The noise gain E as an explicit matrix."""
        return np.eye(self.n) if self.noise_gain is None else np.asarray(self.noise_gain)

    @property
    def theta_star(self) -> np.ndarray:
        """Θ* = [A, B]^T, shape (n+m) x n."""
        return np.hstack([self.A, self.B]).T

    def to_dict(self) -> dict[str, Any]:
        payload = {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "rank_r": self.rank_r,
            "sigma_w": self.sigma_w,
        }
        if self.noise_gain is not None:
            payload["noise_gain"] = self.noise_gain.tolist()
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> SystemModel:
        return cls(
            A=np.asarray(payload["A"], dtype=float),
            B=np.asarray(payload["B"], dtype=float),
            rank_r=int(payload["rank_r"]),
            sigma_w=float(payload.get("sigma_w", 0.0)),
            noise_gain=None if payload.get("noise_gain") is None else np.asarray(payload["noise_gain"]),
        )


@dataclass(frozen=True)
class DistSpec:
    """Zero-mean sub-Gaussian excitation or noise distribution.

    Args:
        family: 'gaussian', 'uniform' or 'rademacher'
        scale: std-dev (gaussian), half-width a (uniform) or magnitude
            (rademacher); 0 gives the constant zero stream
        dim: vector dimension of one draw
    """
    family: str
    scale: float
    dim: int

    def __post_init__(self) -> None:
        validate_choice(self.family, "family", DIST_FAMILIES)
        validate_real(self.scale, "scale", min_val=0.0)
        validate_positive_int(self.dim, "dim", min_val=1)

    @property
    def variance(self) -> float:
        """Per-coordinate variance."""
        if self.family == "uniform":
            return self.scale ** 2 / 3.0
        return self.scale ** 2

    @property
    def subgaussian_param(self) -> float:
        """Sub-Gaussian parameter; the half-width for uniform is conservative."""
        return float(self.scale)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Draw ``count`` independent vectors, shape (count, dim)."""
        size = (count, self.dim)
        if self.family == "gaussian":
            return rng.normal(0.0, 1.0, size=size) * self.scale
        if self.family == "uniform":
            return rng.uniform(-1.0, 1.0, size=size) * self.scale
        return (2.0 * rng.integers(0, 2, size=size) - 1.0) * self.scale

    @classmethod
    def from_descriptor(cls, family: str | None, scale: float, dim: int) -> DistSpec | None:
        """Build from config fields; a missing family means 'absent'."""
        if family is None:
            return None
        return cls(family=family, scale=scale, dim=dim)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated run: states x(0..T0), inputs u(0..T0-1), noises E w(0..T0-1)."""
    states: np.ndarray
    inputs: np.ndarray
    noises: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", _frozen(self.states))
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        object.__setattr__(self, "noises", _frozen(self.noises))

    @property
    def T0(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Stacked regression ``X = Z Θ* + W``.

    Args:
        X: N x n responses
        Z: N x (n+m) regressors
        W: optional N x n noise matrix (retained for oracle checks)
        Sigma: optional (n+m) x (n+m) population covariance of a Z row
    """
    X: np.ndarray
    Z: np.ndarray
    W: np.ndarray | None = None
    Sigma: np.ndarray | None = None

    def __post_init__(self) -> None:
        Z = validate_matrix(self.Z, "Z")
        X = validate_matrix(self.X, "X", shape=(Z.shape[0], None))
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Z", _frozen(Z))
        if self.W is not None:
            W = validate_matrix(self.W, "W", shape=X.shape)
            object.__setattr__(self, "W", _frozen(W))
        if self.Sigma is not None:
            Sigma = validate_matrix(self.Sigma, "Sigma", shape=(Z.shape[1], Z.shape[1]))
            if not np.allclose(Sigma, Sigma.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(Sigma).max())):
                raise ValidationError("Sigma must be symmetric")
            object.__setattr__(self, "Sigma", _frozen(Sigma))

    @property
    def N(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        """Regressor width n+m."""
        return self.Z.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def sample_covariance(self) -> np.ndarray:
        """Σ̂ = Z^T Z / N."""
        return self.Z.T @ self.Z / self.N

    def to_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"X": self.X.tolist(), "Z": self.Z.tolist()}
        if self.W is not None:
            payload["W"] = self.W.tolist()
        if self.Sigma is not None:
            payload["Sigma"] = self.Sigma.tolist()
        return payload

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> RegressionData:
        def _opt(key: str) -> np.ndarray | None:
            value = payload.get(key)
            return None if value is None else np.asarray(value, dtype=float)

        return cls(
            X=np.asarray(payload["X"], dtype=float),
            Z=np.asarray(payload["Z"], dtype=float),
            W=_opt("W"),
            Sigma=_opt("Sigma"),
        )


# =============================================================================
# ESTIMATION
# =============================================================================

@dataclass(frozen=True)
class SolverConfig:
    """Iteration limits and tolerances shared by the iterative solvers.

    Args:
        max_iters: iteration cap
        rel_tol: stop when the relative iterate change falls below this
        kkt_tol: optimality (or feasibility) residual required to report
            convergence
        admm_rho: initial penalty of the equality-constrained splitting
        acceleration: momentum for the proximal gradient solver
    """
    max_iters: int = 5000
    rel_tol: float = 1e-10
    kkt_tol: float = 1e-6
    admm_rho: float = 1.0
    acceleration: bool = True

    def __post_init__(self) -> None:
        validate_positive_int(self.max_iters, "max_iters", min_val=1)
        validate_real(self.rel_tol, "rel_tol", min_val=0.0, strict_min=True)
        validate_real(self.kkt_tol, "kkt_tol", min_val=0.0, strict_min=True)
        validate_real(self.admm_rho, "admm_rho", min_val=0.0, strict_min=True)
        if not isinstance(self.acceleration, bool):
            raise ValidationError("acceleration must be a boolean")

    @classmethod
    def from_dict(cls, payload: dict[str, Any] | None) -> SolverConfig:
        payload = payload or {}
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValidationError(f"Unknown solver settings: {', '.join(sorted(unknown))}")
        return cls(**payload)


def _real(payload: dict[str, Any], key: str) -> float:
    value = payload[key]
    return math.nan if value is None else float(value)


@dataclass(frozen=True, eq=False)
class Estimate:
    """An estimated coefficient matrix with solver diagnostics.

    Args:
        theta_hat: (n+m) x n estimate
        lambda_used: regularization weight (0 for unregularized programs)
        iters: iterations performed
        converged: tolerance reached
        kkt_residual: optimality residual (see kkt_check)
        objective: final objective value
        method: which program produced the estimate
        unique: False when least squares had to pick the min-norm solution
        objective_trace: per-iteration objective (non-accelerated runs)
    """
    theta_hat: np.ndarray
    lambda_used: float
    iters: int
    converged: bool
    kkt_residual: float
    objective: float
    method: str = ""
    unique: bool = True
    objective_trace: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta_hat", _frozen(self.theta_hat))

    def to_dict(self) -> dict[str, Any]:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "lambda_used": self.lambda_used,
            "iters": self.iters,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "objective": self.objective,
            "method": self.method,
            "unique": self.unique,
        }

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> Estimate:
        return cls(
            theta_hat=np.asarray(payload["theta_hat"], dtype=float),
            lambda_used=float(payload["lambda_used"]),
            iters=int(payload["iters"]),
            converged=bool(payload["converged"]),
            kkt_residual=_real(payload, "kkt_residual"),
            objective=_real(payload, "objective"),
            method=str(payload.get("method", "")),
            unique=bool(payload.get("unique", True)),
        )


# =============================================================================
# CERTIFICATION
# =============================================================================

@dataclass(frozen=True)
class WeakRipEstimate:
    """Sampled weak-RIP constant of one order.

    ``delta_hat`` is the smallest δ with K1(1-δ) <= ratio_min and
    ratio_max <= K2(1+δ) over the sampled pool; the certificate fails when
    that δ is not below 1. ``delta_exact`` is the closed-form constant of
    the measurement map Δ -> ZΔ (extreme singular values of Z/√N).
    """
    r: int
    K1: float
    K2: float
    delta_hat: float
    samples: int
    ratio_min: float
    ratio_max: float
    delta_exact: float = math.nan

    @property
    def failed(self) -> bool:
        return not self.delta_hat < 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "r": self.r,
            "K1": self.K1,
            "K2": self.K2,
            "delta_hat": self.delta_hat,
            "delta_exact": self.delta_exact,
            "failed": self.failed,
            "samples": self.samples,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
        }


@dataclass(frozen=True)
class CurvatureEstimate:
    """Operator-norm curvature of the quadratic loss.

    Args:
        curvature: σ_min(Σ̂), the certified curvature
        sampled_min: min over sampled unit-operator-norm Δ of ||Σ̂Δ||_op
        trials: number of sampled directions
    """
    curvature: float
    sampled_min: float
    trials: int


@dataclass(frozen=True)
class CovarianceDeviation:
    """Deviation ||Z^T Z / N - Σ||_op with its concentration envelope."""
    dev: float
    dim: int
    n_samples: int

    def bound_at(self, delta: float, beta: float) -> float:
        """16√6 β² (√(d/N) + d/N) + δ β²."""
        ratio = self.dim / self.n_samples
        return 16.0 * math.sqrt(6.0) * beta ** 2 * (math.sqrt(ratio) + ratio) + delta * beta ** 2


@dataclass(frozen=True)
class ThresholdCheck:
    """A measured value against its threshold."""
    value: float
    threshold: float

    @property
    def exceeded(self) -> bool:
        return self.value > self.threshold


@dataclass(frozen=True)
class ConeCheck:
    """Cone-constraint ratios of an error matrix.

    Args:
        ratio: ||Δ_M̄⊥||nuc / (3 max(||Δ_M̄||nuc, ε)); <= 1 is the
            regularized-program cone
        nuc_vs_frob: ||Δ||nuc / (4√(2r) ||Δ||_F)
        nuc_vs_op: ||Δ||nuc / (32 r ||Δ||_op)
        noiseless_ratio: ||Δ_M̄⊥||nuc / max(||Δ_M̄||nuc, ε); <= 1 is the
            equality-constrained cone
    """
    ratio: float
    nuc_vs_frob: float
    nuc_vs_op: float
    noiseless_ratio: float

    def holds(self, tolerance: float = 1e-6) -> bool:
        return self.ratio <= 1.0 + tolerance and self.nuc_vs_frob <= 1.0 + tolerance


@dataclass(frozen=True)
class BoundParams:
    """Inputs of the closed-form error bounds."""
    K: float
    lam: float
    alpha: float
    gamma_min: float
    n: int
    m: int
    N: int
    r: int
    R_q: float = 0.0
    tau_N: float = 0.0

    def __post_init__(self) -> None:
        validate_real(self.K, "K", min_val=0.0, strict_min=True)
        validate_real(self.lam, "lam", min_val=0.0)
        validate_real(self.alpha, "alpha", min_val=0.0)
        validate_real(self.gamma_min, "gamma_min", min_val=0.0, strict_min=True)
        validate_positive_int(self.n, "n", min_val=1)
        validate_positive_int(self.m, "m", min_val=1)
        validate_positive_int(self.N, "N", min_val=1)
        validate_positive_int(self.r, "r", min_val=1)
        validate_real(self.R_q, "R_q", min_val=0.0)
        validate_real(self.tau_N, "tau_N", min_val=0.0)


@dataclass(frozen=True)
class CertReport:
    """Empirical certificate of one design.

    Every verdict is recomputed from the stored numbers on access.
    """
    rank: int
    weak_rip: tuple[WeakRipEstimate, ...]
    curvature_K: float
    cov_dev_op: float
    cross_term_op: float
    s_value: int
    lambda_used: float
    predicted_bounds: dict[str, float] = field(default_factory=dict)

    def _delta_of_order(self, order: int) -> float:
        """Delta of the smallest certified order >= ``order``; 1.0 if none."""
        candidates = [w for w in self.weak_rip if w.r >= order]
        if not candidates:
            return 1.0
        return min(candidates, key=lambda w: w.r).delta_hat

    @property
    def delta_2r(self) -> float:
        return self._delta_of_order(2 * self.rank)

    @property
    def delta_2p3s_r(self) -> float:
        return self._delta_of_order((2 + 3 * self.s_value) * self.rank)

    @property
    def thresholds(self) -> dict[str, bool]:
        return {
            "uniqueness": self.delta_2r < 1.0,
            "exact_recovery": self.delta_2p3s_r < 5.0 - 2.0 * math.sqrt(6.0),
            "lambda_premise": self.lambda_used >= 2.0 * self.cross_term_op,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "rank": self.rank,
            "weak_rip": [w.to_dict() for w in self.weak_rip],
            "curvature_K": self.curvature_K,
            "cov_dev_op": self.cov_dev_op,
            "cross_term_op": self.cross_term_op,
            "s_value": self.s_value,
            "lambda_used": self.lambda_used,
            "thresholds": self.thresholds,
            "predicted_bounds": dict(self.predicted_bounds),
        }


# =============================================================================
# EXPERIMENTS
# =============================================================================

_SINGULAR_SPEC = re.compile(r"^(equal|geometric\((?P<ratio>[0-9.eE+-]+)\))$")


def parse_singular_spec(spec: str) -> tuple[str, float]:
    """Parse 'equal' or 'geometric(<ratio>)' into (kind, ratio).

    Raises:
        ValidationError: If the descriptor is malformed or ratio not in (0, 1]
    """
    match = _SINGULAR_SPEC.match(spec.strip()) if isinstance(spec, str) else None
    if match is None:
        raise ValidationError(f"singular_spec must be 'equal' or 'geometric(<ratio>)', got {spec!r}")
    if match.group("ratio") is None:
        return "equal", 1.0
    try:
        ratio = float(match.group("ratio"))
    except ValueError as e:
        raise ValidationError(f"Invalid geometric ratio in {spec!r}") from e
    validate_real(ratio, "geometric ratio", min_val=0.0, max_val=1.0, strict_min=True)
    return "geometric", ratio


@dataclass(frozen=True)
class ExperimentConfig:
    """Configuration of one harness experiment, loaded from JSON."""
    experiment: str
    n: int
    m: int
    r: int
    T0: int
    N_grid: tuple[int, ...]
    trials_per_cell: int = 20
    input_family: str = "gaussian"
    noise_family: str | None = "gaussian"
    sigma_u: float = 1.0
    sigma_w: float = 1.0
    spectral_radius_cap: float = 0.9
    master_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str = "results"
    lambda_scale: float = 1.0
    beta: float | None = None
    singular_spec: str = "equal"
    theta_scale: float = 1.0
    rip_trials: int = 200
    record_timing: bool = True
    q: float = 0.5
    radius: float = 2.0

    def __post_init__(self) -> None:
        validate_choice(self.experiment, "experiment", EXPERIMENTS)
        validate_positive_int(self.n, "n", min_val=1)
        validate_positive_int(self.m, "m", min_val=1)
        validate_positive_int(self.r, "r", min_val=1, max_val=self.n)
        validate_positive_int(self.T0, "T0", min_val=2)
        object.__setattr__(self, "N_grid", tuple(self.N_grid))
        for N in self.N_grid:
            validate_positive_int(N, "N_grid entry", min_val=1)
        validate_increasing(self.N_grid, "N_grid")
        validate_positive_int(self.trials_per_cell, "trials_per_cell", min_val=1)
        validate_choice(self.input_family, "input_family", DIST_FAMILIES)
        if self.noise_family is not None:
            validate_choice(self.noise_family, "noise_family", DIST_FAMILIES)
        validate_real(self.sigma_u, "sigma_u", min_val=0.0, strict_min=True)
        validate_real(self.sigma_w, "sigma_w", min_val=0.0)
        validate_real(self.spectral_radius_cap, "spectral_radius_cap", min_val=0.0, strict_min=True)
        validate_positive_int(self.master_seed, "master_seed", min_val=0, max_val=2 ** 64 - 1)
        validate_real(self.lambda_scale, "lambda_scale", min_val=0.0, strict_min=True)
        if self.beta is not None:
            validate_real(self.beta, "beta", min_val=0.0, strict_min=True)
        parse_singular_spec(self.singular_spec)
        validate_real(self.theta_scale, "theta_scale", min_val=0.0, strict_min=True)
        validate_positive_int(self.rip_trials, "rip_trials", min_val=100)
        validate_real(self.q, "q", min_val=0.0, max_val=1.0)
        validate_real(self.radius, "radius", min_val=0.0, strict_min=True)
        if self.experiment == "phase_transition" and self.noise_family is not None:
            raise ValidationError("phase_transition runs the noiseless program; set noise_family to null")
        if self.experiment in ("error_scaling", "bounds_check", "weak_low_rank") and self.noise_family is None:
            raise ValidationError(f"{self.experiment} needs a noise_family")
        if self.experiment == "error_scaling" and self.N_grid[-1] < 8 * self.N_grid[0]:
            raise ValidationError(
                f"error_scaling needs an N_grid spanning at least 3 octaves, got {self.N_grid[0]}..{self.N_grid[-1]}"
            )

    @property
    def p(self) -> int:
        return self.n + self.m

    def input_spec(self) -> DistSpec:
        return DistSpec(self.input_family, self.sigma_u, self.m)

    def noise_spec(self) -> DistSpec | None:
        return DistSpec.from_descriptor(self.noise_family, self.sigma_w, self.n)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> ExperimentConfig:
        """Build from a decoded JSON object.

        Raises:
            ValidationError: On unknown keys, missing keys or bad values
        """
        if not isinstance(payload, dict):
            raise ValidationError("Experiment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValidationError(f"Unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(payload)
        data["solver"] = SolverConfig.from_dict(data.get("solver"))
        if "N_grid" in data:
            if not isinstance(data["N_grid"], (list, tuple)):
                raise ValidationError("N_grid must be a list of integers")
            data["N_grid"] = tuple(data["N_grid"])
        try:
            return cls(**data)
        except TypeError as e:
            raise ValidationError(f"Invalid experiment config: {e}") from e

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        """Load a JSON config file.

        Raises:
            ValidationError: If the file is missing, not JSON, or invalid
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ValidationError(f"Cannot read config {path}: {e}") from e
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Config {path} is not valid JSON: {e}") from e
        return cls.from_dict(payload)


@dataclass(frozen=True)
class TrialRecord:
    """One CSV row of a trial-based experiment."""
    experiment: str
    N: int
    trial: int
    seed: int
    success: bool
    op_err: float
    frob_err: float
    nuc_err: float
    lam: float
    kkt_residual: float
    premise_held: bool
    bound: float
    violated: bool
    wall_ms: int

    COLUMNS = (
        "experiment", "N", "trial", "seed", "success", "op_err", "frob_err", "nuc_err",
        "lambda", "kkt_residual", "premise_held", "bound", "violated", "wall_ms",
    )

    def as_row(self) -> list[str]:
        def _num(value: float) -> str:
            return format(float(value), ".17g")

        return [
            self.experiment, str(self.N), str(self.trial), str(self.seed),
            str(int(self.success)), _num(self.op_err), _num(self.frob_err), _num(self.nuc_err),
            _num(self.lam), _num(self.kkt_residual), str(int(self.premise_held)),
            _num(self.bound), str(int(self.violated)), str(self.wall_ms),
        ]


@dataclass(frozen=True)
class CellResult:
    """Aggregate over the trials of one sample size.

    ``bound_violation_rate`` is taken over the trials whose premise held;
    ``excluded_trials`` counts the others.
    """
    N: int
    success_rate: float
    median_op_err: float
    median_frob_err: float
    bound_violation_rate: float
    wall_ms: int
    trials: int = 0
    excluded_trials: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "success_rate": self.success_rate,
            "median_op_err": self.median_op_err,
            "median_frob_err": self.median_frob_err,
            "bound_violation_rate": self.bound_violation_rate,
            "wall_ms": self.wall_ms,
            "trials": self.trials,
            "excluded_trials": self.excluded_trials,
        }


# =============================================================================
# TOOL RESPONSES
# =============================================================================

def json_safe(value: Any) -> Any:
    """Replace NaN and infinities with None so the output is strict JSON.

    Recurses through dicts, lists and tuples; numpy scalars and arrays are
    converted to Python values first.
    """
    if isinstance(value, np.ndarray):
        value = value.tolist()
    elif isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    return value



@dataclass
class ToolResult:
    """Standardized result from a tool operation.

    Args:
        success: Whether the operation succeeded
        message: Human-readable result message
        data: Additional result data
    """
    success: bool
    message: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        """Serialize to JSON string."""
        result = {"success": self.success, "message": self.message}
        result.update(self.data)
        return json.dumps(json_safe(result), indent=2, allow_nan=False)


# =============================================================================
# MCP TOOL DEFINITIONS
# =============================================================================

_DIST_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"type": "string", "enum": list(DIST_FAMILIES)},
        "scale": {"type": "number", "minimum": 0},
    },
    "required": ["family", "scale"],
}

_SYSTEM_PROPERTIES: dict[str, Any] = {
    "n": {"type": "integer", "description": "State dimension", "minimum": 1},
    "m": {"type": "integer", "description": "Input dimension", "minimum": 1},
    "r": {"type": "integer", "description": "Rank of the coefficient matrix [A, B]^T", "minimum": 1},
    "T0": {"type": "integer", "description": "Trajectory length per repeated sample (>= 2)", "default": 2},
    "N": {"type": "integer", "description": "Number of independent trajectories (rows of Z)"},
    "input": {**_DIST_SCHEMA, "description": "Excitation distribution"},
    "noise": {
        "anyOf": [_DIST_SCHEMA, {"type": "null"}],
        "description": "Noise distribution, null for the noiseless system",
    },
    "spectral_radius_cap": {"type": "number", "description": "Cap on the spectral radius of A", "default": 0.9},
    "seed": {"type": "integer", "description": "Master seed", "default": 0},
}

TOOL_DEFINITIONS: list[Tool] = [
    Tool(
        name="simulate_system",
        description="Generate a low-rank VARX(1) system and collect N independently repeated input-state samples. Returns Θ*, the regression matrices and the population covariance.",
        inputSchema={
            "type": "object",
            "properties": dict(_SYSTEM_PROPERTIES),
            "required": ["n", "m", "r", "N"],
        },
    ),
    Tool(
        name="estimate_coefficients",
        description="Simulate a system, then estimate Θ* by least squares, nuclear-norm regularized least squares, or equality-constrained nuclear-norm minimization. Reports errors and solver diagnostics.",
        inputSchema={
            "type": "object",
            "properties": {
                **_SYSTEM_PROPERTIES,
                "method": {
                    "type": "string",
                    "enum": ["least_squares", "nuclear_reg", "nuclear_exact"],
                    "default": "nuclear_reg",
                },
                "lambda": {"type": "number", "description": "Regularization weight; defaults to the 4α√((n+m)/N) rule"},
                "max_iters": {"type": "integer", "default": 5000},
            },
            "required": ["n", "m", "r", "N"],
        },
    ),
    Tool(
        name="certify_design",
        description="Certify a simulated design empirically: weak RIP at orders r, 2r, (2+3s)r, operator-norm curvature, covariance deviation and the cross-term λ premise.",
        inputSchema={
            "type": "object",
            "properties": {
                **_SYSTEM_PROPERTIES,
                "lambda": {"type": "number", "description": "Regularization weight to test against the premise"},
                "trials": {"type": "integer", "description": "Monte Carlo directions per weak-RIP order", "default": 200},
            },
            "required": ["n", "m", "r", "N"],
        },
    ),
    Tool(
        name="predict_bounds",
        description="Evaluate the closed-form operator-norm and Frobenius error bounds for given curvature, λ, α and sample size.",
        inputSchema={
            "type": "object",
            "properties": {
                "K": {"type": "number"},
                "lam": {"type": "number"},
                "alpha": {"type": "number"},
                "gamma_min": {"type": "number"},
                "n": {"type": "integer"},
                "m": {"type": "integer"},
                "N": {"type": "integer"},
                "r": {"type": "integer"},
                "R_q": {"type": "number", "default": 0},
                "tau_N": {"type": "number", "default": 0},
            },
            "required": ["K", "lam", "alpha", "gamma_min", "n", "m", "N", "r"],
        },
    ),
    Tool(
        name="run_experiment",
        description="Run one harness experiment (phase_transition, error_scaling, bounds_check, rip_profile, weak_low_rank) from an experiment config object and write CSV and plot data to its output_dir.",
        inputSchema={
            "type": "object",
            "properties": {
                "config": {"type": "object", "description": "ExperimentConfig as a JSON object"},
            },
            "required": ["config"],
        },
    ),
]
