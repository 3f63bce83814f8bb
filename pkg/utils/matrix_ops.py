"""
Dense linear-algebra foundation for lowrank-varx-id.

SVD-derived norms, singular value thresholding (the proximal operator of
the nuclear norm), the low-rank model subspaces M, M̄ and M̄⊥ of a
coefficient matrix, and the ℓq threshold split used for weakly low-rank
matrices.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from models.schemas import LqSplit, NormKind, ProjectionTarget, SubspaceFrame, SvdFactors
from utils.logger import setup_logger
from utils.validation import ValidationError, validate_choice, validate_matrix, validate_positive_int, validate_real

logger = setup_logger(__name__)

RANK_TOL = 1e-8


class NumericalError(Exception):
    """Raised when a numerical routine cannot produce a valid result.

    Attributes:
        shape: Dimensions of the matrix the routine failed on
        detail: Optional extra context
    """

    def __init__(self, message: str, shape: tuple[int, ...] = (), detail: str | None = None):
        self.shape = tuple(shape)
        self.detail = detail
        super().__init__(message)


class SvdConvergenceError(NumericalError):
    """Both LAPACK drivers failed to factor the matrix."""
    pass


class RankMismatchError(NumericalError):
    """Numerical rank differs from the requested rank."""

    def __init__(self, expected: int, found: int, shape: tuple[int, ...] = ()):
        self.expected = expected
        self.found = found
        super().__init__(
            f"Numerical rank {found} does not match requested rank {expected}",
            shape=shape,
        )


def svd(matrix: np.ndarray) -> SvdFactors:
    """Thin SVD with a fallback to the slower, more robust LAPACK driver.

    Args:
        matrix: Finite real matrix

    Returns:
        SvdFactors with non-increasing singular values

    Raises:
        ValidationError: If the input is not a finite matrix
        SvdConvergenceError: If both drivers fail to converge
    """
    M = validate_matrix(matrix, "matrix")
    try:
        left, singulars, right_t = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        logger.debug(f"gesdd failed on {M.shape}, retrying with gesvd")
        try:
            left, singulars, right_t = scipy.linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as e:
            raise SvdConvergenceError(
                f"SVD did not converge for a {M.shape[0]}x{M.shape[1]} matrix",
                shape=M.shape,
                detail=str(e),
            ) from e
    return SvdFactors(left=left, singulars=singulars, right=right_t.T)


def singular_values(matrix: np.ndarray) -> np.ndarray:
    """Singular values only, non-increasing."""
    M = validate_matrix(matrix, "matrix")
    try:
        return scipy.linalg.svdvals(M)
    except np.linalg.LinAlgError:
        return svd(M).singulars


def norm(matrix: np.ndarray, kind: NormKind) -> float:
    """Nuclear, operator or Frobenius norm from the singular values.

    Raises:
        ValidationError: If kind is unknown or the matrix invalid
    """
    validate_choice(kind, "kind", ("nuclear", "operator", "frobenius"))
    sigma = singular_values(matrix)
    if kind == "nuclear":
        return float(np.sum(sigma))
    if kind == "operator":
        return float(sigma[0]) if sigma.size else 0.0
    return float(math.sqrt(np.sum(sigma ** 2)))


def numerical_rank(matrix: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Count singular values above ``rel_tol * sigma_1``."""
    sigma = singular_values(matrix)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rel_tol * sigma[0]))


def svt_with_singulars(matrix: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Singular value thresholding, also returning the shrunk singular values.

    Returns:
        (U diag(max(sigma - tau, 0)) V^T, shrunk singular values)
    """
    validate_real(tau, "tau", min_val=0.0)
    M = validate_matrix(matrix, "matrix")
    if tau == 0.0:
        return M.copy(), singular_values(M)
    factors = svd(M)
    shrunk = np.maximum(factors.singulars - tau, 0.0)
    keep = shrunk > 0.0
    result = (factors.left[:, keep] * shrunk[keep]) @ factors.right[:, keep].T
    return result, shrunk


def svt(matrix: np.ndarray, tau: float) -> np.ndarray:
    """Proximal operator of ``tau * ||.||_nuc``.

    Example:
        >>> svt(np.diag([3.0, 1.0]), 1.0)
        array([[2., 0.],
               [0., 0.]])
    """
    return svt_with_singulars(matrix, tau)[0]


def subspace_frame(theta_star: np.ndarray, r: int) -> SubspaceFrame:
    """Top-r left and right singular subspaces of ``theta_star``.

    Raises:
        RankMismatchError: If the numerical rank at 1e-8 * sigma_1 is not r
    """
    theta = validate_matrix(theta_star, "theta_star")
    validate_positive_int(r, "r", min_val=1, max_val=min(theta.shape))
    factors = svd(theta)
    sigma = factors.singulars
    found = int(np.count_nonzero(sigma > RANK_TOL * sigma[0])) if sigma[0] > 0 else 0
    if found != r:
        raise RankMismatchError(expected=r, found=found, shape=theta.shape)
    return SubspaceFrame(col_basis=factors.left[:, :r], row_basis=factors.right[:, :r], rank=r)


def project(frame: SubspaceFrame, delta: np.ndarray, target: ProjectionTarget) -> np.ndarray:
    """Project ``delta`` onto M, M̄ or M̄⊥.

    M̄⊥ uses the two-sided annihilator (I - UU^T) Δ (I - VV^T); M̄ is its
    complement, so the two always sum back to Δ.

    Raises:
        ValidationError: On a dimension mismatch or unknown target
    """
    validate_choice(target, "target", ("M", "Mbar", "MbarPerp"))
    D = validate_matrix(delta, "delta", shape=frame.shape)
    U, V = frame.col_basis, frame.row_basis
    if target == "M":
        return U @ (U.T @ D @ V) @ V.T
    left = D - U @ (U.T @ D)
    perp = left - (left @ V) @ V.T
    if target == "MbarPerp":
        return perp
    return D - perp


def lq_radius(theta: np.ndarray, q: float) -> float:
    """Smallest R_q with theta in the ball B(R_q); q=0 counts nonzero singulars."""
    validate_real(q, "q", min_val=0.0, max_val=1.0)
    sigma = singular_values(theta)
    if q == 0.0:
        return float(numerical_rank(theta))
    return float(np.sum(sigma ** q))


def lq_threshold_split(theta: np.ndarray, q: float, tau: float) -> LqSplit:
    """Zero the singular values above ``tau``.

    Args:
        theta: Finite matrix
        q: Ball exponent in [0, 1]
        tau: Threshold, > 0

    Returns:
        LqSplit with the count above tau and the remaining matrix; its
        ``holds()`` checks both threshold inequalities at R_q = lq_radius

    Raises:
        ValidationError: If tau <= 0 or q outside [0, 1]
    """
    validate_real(tau, "tau", min_val=0.0, strict_min=True)
    validate_real(q, "q", min_val=0.0, max_val=1.0)
    factors = svd(theta)
    sigma = factors.singulars
    above = sigma > tau
    s_size = int(np.count_nonzero(above))
    tail = np.where(above, 0.0, sigma)
    theta_prime = (factors.left * tail) @ factors.right.T
    return LqSplit(
        s_size=s_size,
        theta_prime=theta_prime,
        tail_singulars=tail[~above],
        q=float(q),
        tau=float(tau),
        radius=lq_radius(theta, q),
    )
