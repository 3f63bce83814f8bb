"""
Estimators for the coefficient matrix Θ* of X = Z Θ* + W.

Provides:
- Least squares (pooled repeated samples or stacked trajectories)
- Nuclear-norm regularized least squares by proximal gradient
- Equality-constrained nuclear-norm minimization by ADMM
- A rank-constrained alternating-projection oracle for small instances
- The regularization rule and the KKT optimality residual
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from models.schemas import Estimate, LeastSquaresMode, RegressionData, SolverConfig
from utils.logger import setup_logger
from utils.matrix_ops import NumericalError, numerical_rank, svd, svt_with_singulars
from utils.validation import ValidationError, validate_choice, validate_matrix, validate_positive_int, validate_real

logger = setup_logger(__name__)

KKT_CHECK_PERIOD = 10
RHO_BALANCE_PERIOD = 10
RHO_MU = 10.0
RHO_TAU = 2.0


class InfeasibleProgramError(NumericalError):
    """Raised when Z Θ = X has no solution.

    Attributes:
        residual: Relative residual ||Z Θ - X||_F / ||X||_F of the
            least-squares point
    """

    def __init__(self, residual: float, shape: tuple[int, ...] = ()):
        self.residual = residual
        super().__init__(
            f"Affine constraint Z Theta = X is inconsistent (relative residual floor {residual:.3e})",
            shape=shape,
        )


# =============================================================================
# LOSS
# =============================================================================

def loss_value(theta: np.ndarray, data: RegressionData) -> float:
    """(1 / 2N) ||X - Z Θ||_F^2."""
    residual = data.X - data.Z @ theta
    return float(np.sum(residual ** 2) / (2.0 * data.N))


def loss_gradient(theta: np.ndarray, data: RegressionData) -> np.ndarray:
    """Σ̂ Θ - Z^T X / N."""
    return data.Z.T @ (data.Z @ theta - data.X) / data.N


def lambda_rule(n: int, m: int, N: int, alpha: float) -> float:
    """4 α √((n + m) / N).

    Example:
        >>> lambda_rule(40, 60, 400, 1.0)
        2.0
    """
    validate_positive_int(n, "n", min_val=1)
    validate_positive_int(m, "m", min_val=1)
    validate_positive_int(N, "N", min_val=1)
    validate_real(alpha, "alpha", min_val=0.0, strict_min=True)
    return 4.0 * alpha * math.sqrt((n + m) / N)


def alpha_param(sigma_w: float, beta: float, gamma_max: float) -> float:
    """α = √(2 σ_w² ((32√6 + 1) β² + γ_max))."""
    validate_real(sigma_w, "sigma_w", min_val=0.0, strict_min=True)
    validate_real(beta, "beta", min_val=0.0)
    validate_real(gamma_max, "gamma_max", min_val=0.0)
    return math.sqrt(2.0 * sigma_w ** 2 * ((32.0 * math.sqrt(6.0) + 1.0) * beta ** 2 + gamma_max))


def kkt_check(theta_hat: np.ndarray, data: RegressionData, lam: float) -> float:
    """Normalized distance of -∇L(Θ̂) from λ ∂||Θ̂||_nuc.

    The subgradient is U₊V₊^T on the positive-singular part of Θ̂ plus the
    projection of -∇L/λ onto the complementary subspaces with its singular
    values clipped at 1. Returns ||∇L + λG||_F / (λ √(rows · cols)).

    Raises:
        ValidationError: If lam <= 0 or theta_hat has the wrong shape
    """
    validate_real(lam, "lam", min_val=0.0, strict_min=True)
    theta = validate_matrix(theta_hat, "theta_hat", shape=(data.p, data.n))
    grad = loss_gradient(theta, data)
    factors = svd(theta)
    sigma = factors.singulars
    positive = sigma > 1e-8 * sigma[0] if sigma[0] > 0 else np.zeros_like(sigma, dtype=bool)
    U = factors.left[:, positive]
    V = factors.right[:, positive]

    target = -grad / lam
    null_part = target - U @ (U.T @ target)
    null_part = null_part - (null_part @ V) @ V.T
    if np.any(null_part):
        null_factors = svd(null_part)
        clipped = np.minimum(null_factors.singulars, 1.0)
        null_part = (null_factors.left * clipped) @ null_factors.right.T
    G = U @ V.T + null_part
    residual = grad + lam * G
    return float(np.linalg.norm(residual) / (lam * math.sqrt(theta.size)))


# =============================================================================
# LEAST SQUARES
# =============================================================================

def least_squares(
    data: RegressionData | Sequence[RegressionData],
    mode: LeastSquaresMode = "pooled_final_state",
) -> Estimate:
    """Minimize ||X - Z Θ||_F^2.

    ``pooled_final_state`` takes the repeated-sample regression;
    ``stacked_trajectory`` accepts one or more within-trajectory stacks
    and pools them as (Σ Zᵢ^T Zᵢ)⁻¹ (Σ Zᵢ^T Xᵢ). A rank-deficient design
    returns the minimum-Frobenius-norm solution with ``unique=False``.
    """
    validate_choice(mode, "mode", ("pooled_final_state", "stacked_trajectory"))
    if isinstance(data, RegressionData):
        pieces = [data]
    else:
        if mode != "stacked_trajectory":
            raise ValidationError("A sequence of regressions is only accepted in stacked_trajectory mode")
        pieces = list(data)
        if not pieces:
            raise ValidationError("No trajectories to pool")
    Z = np.vstack([piece.Z for piece in pieces])
    X = np.vstack([piece.X for piece in pieces])
    pooled = pieces[0] if len(pieces) == 1 else RegressionData(X=X, Z=Z)

    unique = numerical_rank(Z) == Z.shape[1]
    if unique:
        gram = scipy.linalg.cho_factor(Z.T @ Z)
        theta = scipy.linalg.cho_solve(gram, Z.T @ X)
    else:
        logger.warning(f"Design of shape {Z.shape} is rank deficient; returning the minimum-norm solution")
        theta = scipy.linalg.lstsq(Z, X)[0]

    grad = loss_gradient(theta, pooled)
    return Estimate(
        theta_hat=theta,
        lambda_used=0.0,
        iters=0,
        converged=True,
        kkt_residual=float(np.linalg.norm(grad)),
        objective=loss_value(theta, pooled),
        method=f"least_squares:{mode}",
        unique=unique,
    )


# =============================================================================
# REGULARIZED PROGRAM
# =============================================================================

def nuclear_reg_solve(data: RegressionData, lam: float, cfg: SolverConfig | None = None) -> Estimate:
    """Minimize (1/2N)||X - ZΘ||_F^2 + λ||Θ||_nuc by proximal gradient.

    Step 1/L with L = ||Z^T Z / N||_op, starting from Θ = 0. With
    ``cfg.acceleration`` the momentum sequence restarts whenever the
    update direction opposes the last step. The run stops when the
    relative iterate change drops below ``rel_tol`` or the KKT residual
    (checked periodically) drops below ``kkt_tol``. A run that never meets
    ``kkt_tol`` returns the best iterate seen with ``converged=False``.

    Raises:
        ValidationError: If lam <= 0
    """
    validate_real(lam, "lam", min_val=0.0, strict_min=True)
    cfg = cfg or SolverConfig()
    sigma_hat = data.sample_covariance
    cross = data.Z.T @ data.X / data.N
    offset = float(np.sum(data.X ** 2) / (2.0 * data.N))
    L = float(scipy.linalg.eigvalsh(sigma_hat)[-1])
    shape = (data.p, data.n)

    def smooth(theta: np.ndarray) -> float:
        return 0.5 * float(np.sum(theta * (sigma_hat @ theta))) - float(np.sum(theta * cross)) + offset

    if L <= 0.0:
        theta = np.zeros(shape)
        return Estimate(
            theta_hat=theta, lambda_used=lam, iters=0, converged=True,
            kkt_residual=kkt_check(theta, data, lam), objective=offset, method="nuclear_reg",
        )

    x = np.zeros(shape)
    y = x.copy()
    t = 1.0
    step = 1.0 / L
    best, best_obj = x.copy(), offset
    trace: list[float] = []
    converged = False
    kkt = math.inf
    iters = 0

    for k in range(1, cfg.max_iters + 1):
        iters = k
        grad = sigma_hat @ y - cross
        x_new, shrunk = svt_with_singulars(y - step * grad, lam * step)
        obj = smooth(x_new) + lam * float(np.sum(shrunk))
        if not cfg.acceleration:
            trace.append(obj)
        if obj < best_obj:
            best, best_obj = x_new, obj

        scale = max(np.linalg.norm(x_new), np.linalg.norm(x), 1e-300)
        change = float(np.linalg.norm(x_new - x)) / scale

        if cfg.acceleration:
            if np.vdot(y - x_new, x_new - x) > 0.0:
                t = 1.0
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_next) * (x_new - x)
            t = t_next
        else:
            y = x_new
        x = x_new

        if change < cfg.rel_tol or k % KKT_CHECK_PERIOD == 0:
            kkt = kkt_check(x, data, lam)
            if kkt <= cfg.kkt_tol:
                converged = True
                break
            if change < cfg.rel_tol:
                break

    if converged:
        theta, objective = x, smooth(x) + lam * float(np.sum(svd(x).singulars))
    else:
        theta, objective = best, best_obj
        kkt = kkt_check(theta, data, lam)
        logger.warning(
            f"Proximal gradient stopped after {iters} iterations without reaching "
            f"kkt_tol={cfg.kkt_tol:g} (residual {kkt:.3e})"
        )
    logger.debug(f"nuclear_reg_solve: {iters} iterations, kkt={kkt:.3e}, lambda={lam:.4g}")
    return Estimate(
        theta_hat=theta,
        lambda_used=lam,
        iters=iters,
        converged=converged,
        kkt_residual=kkt,
        objective=objective,
        method="nuclear_reg",
        objective_trace=tuple(trace),
    )


# =============================================================================
# EQUALITY-CONSTRAINED PROGRAM
# =============================================================================

class AffineProjector:
    """Euclidean projection onto {Θ : Z Θ = X} with a cached factorization.

    Full row rank designs use a Cholesky factor of Z Z^T; full column rank
    designs have a single feasible point; anything else goes through the
    pseudoinverse.

    Raises:
        InfeasibleProgramError: If the system is inconsistent beyond
            ``tol`` relative residual
    """

    def __init__(self, data: RegressionData, tol: float) -> None:
        self._Z = data.Z
        self._X = data.X
        self.fixed_point: np.ndarray | None = None
        N, p = data.Z.shape
        rank = numerical_rank(data.Z)
        x_norm = max(float(np.linalg.norm(data.X)), 1e-300)

        if rank == N and rank < p:
            self.mode = "row"
            self._chol = scipy.linalg.cho_factor(data.Z @ data.Z.T)
            self._apply: Callable[[np.ndarray], np.ndarray] = self._project_row
            return

        if rank == p:
            self.mode = "column"
            gram = scipy.linalg.cho_factor(data.Z.T @ data.Z)
            point = scipy.linalg.cho_solve(gram, data.Z.T @ data.X)
        else:
            self.mode = "pinv"
            self._pinv = scipy.linalg.pinv(data.Z)
            point = self._pinv @ data.X
            self._apply = self._project_pinv

        floor = float(np.linalg.norm(data.Z @ point - data.X)) / x_norm
        if floor > tol:
            raise InfeasibleProgramError(floor, shape=data.Z.shape)
        if self.mode == "column":
            self.fixed_point = point
            self._apply = lambda Y: point.copy()

    def _project_row(self, Y: np.ndarray) -> np.ndarray:
        return Y - self._Z.T @ scipy.linalg.cho_solve(self._chol, self._Z @ Y - self._X)

    def _project_pinv(self, Y: np.ndarray) -> np.ndarray:
        return Y - self._pinv @ (self._Z @ Y - self._X)

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        return self._apply(Y)


def _feasibility(theta: np.ndarray, data: RegressionData) -> float:
    return float(np.linalg.norm(data.Z @ theta - data.X)) / max(float(np.linalg.norm(data.X)), 1e-300)


def nuclear_min_exact(data: RegressionData, cfg: SolverConfig | None = None) -> Estimate:
    """Minimize ||Θ||_nuc subject to Z Θ = X.

    ADMM on the split Θ = Y with Θ restricted to the affine set and Y
    carrying the nuclear norm; the penalty ρ is rebalanced against the
    primal and dual residuals. The returned estimate is the projection of
    the final Y onto the affine set, so it is always feasible up to
    rounding.

    Raises:
        InfeasibleProgramError: If the constraint system is inconsistent
    """
    cfg = cfg or SolverConfig()
    project = AffineProjector(data, cfg.kkt_tol)
    if project.fixed_point is not None:
        theta = project.fixed_point
        return Estimate(
            theta_hat=theta, lambda_used=0.0, iters=0, converged=True,
            kkt_residual=_feasibility(theta, data),
            objective=float(np.sum(svd(theta).singulars)), method="nuclear_exact",
        )

    shape = (data.p, data.n)
    Y = np.zeros(shape)
    U = np.zeros(shape)
    rho = cfg.admm_rho
    converged = False
    residual = math.inf
    iters = 0

    for k in range(1, cfg.max_iters + 1):
        iters = k
        theta = project(Y - U)
        Y_old = Y
        Y = svt_with_singulars(theta + U, 1.0 / rho)[0]
        U = U + theta - Y

        r = float(np.linalg.norm(theta - Y))
        s = rho * float(np.linalg.norm(Y - Y_old))
        r_rel = r / max(float(np.linalg.norm(theta)), float(np.linalg.norm(Y)), 1e-300)
        s_rel = s / max(rho * float(np.linalg.norm(U)), 1e-300)
        residual = max(r_rel, s_rel)
        if (r_rel <= cfg.kkt_tol or r == 0.0) and (s_rel <= cfg.kkt_tol or s == 0.0):
            converged = True
            residual = min(residual, cfg.kkt_tol)
            break

        if k % RHO_BALANCE_PERIOD == 0:
            factor = 1.0
            if r > RHO_MU * s:
                factor = RHO_TAU
            elif s > RHO_MU * r:
                factor = 1.0 / RHO_TAU
            rho *= factor
            U /= factor

    theta = project(Y)
    if not converged:
        logger.warning(
            f"ADMM stopped after {iters} iterations without reaching kkt_tol={cfg.kkt_tol:g} "
            f"(residual {residual:.3e})"
        )
    logger.debug(f"nuclear_min_exact: {iters} iterations, rho={rho:.3g}, mode={project.mode}")
    return Estimate(
        theta_hat=theta,
        lambda_used=0.0,
        iters=iters,
        converged=converged,
        kkt_residual=residual,
        objective=float(np.sum(svd(theta).singulars)),
        method="nuclear_exact",
    )


def rank_constrained_oracle(data: RegressionData, r: int, cfg: SolverConfig | None = None) -> Estimate:
    """Alternate projections between {Z Θ = X} and the rank-r matrices.

    Nonconvex; meant as a cross-check on small instances. Converged when
    the gap between the two sets is below ``kkt_tol`` relative.
    """
    validate_positive_int(r, "r", min_val=1, max_val=min(data.p, data.n))
    cfg = cfg or SolverConfig()
    project = AffineProjector(data, cfg.kkt_tol)
    if project.fixed_point is not None:
        theta = project.fixed_point
        return Estimate(
            theta_hat=theta, lambda_used=0.0, iters=0, converged=True,
            kkt_residual=_feasibility(theta, data),
            objective=float(np.sum(svd(theta).singulars)), method="rank_oracle",
        )

    theta = project(np.zeros((data.p, data.n)))
    gap = math.inf
    converged = False
    iters = 0
    for k in range(1, cfg.max_iters + 1):
        iters = k
        factors = svd(theta)
        low_rank = (factors.left[:, :r] * factors.singulars[:r]) @ factors.right[:, :r].T
        theta = project(low_rank)
        gap = float(np.linalg.norm(theta - low_rank)) / max(float(np.linalg.norm(theta)), 1e-300)
        if gap <= cfg.kkt_tol:
            converged = True
            break
    if not converged:
        logger.warning(f"Rank-{r} alternating projection did not close the gap (gap {gap:.3e})")
    return Estimate(
        theta_hat=theta,
        lambda_used=0.0,
        iters=iters,
        converged=converged,
        kkt_residual=gap,
        objective=float(np.sum(svd(theta).singulars)),
        method="rank_oracle",
    )
