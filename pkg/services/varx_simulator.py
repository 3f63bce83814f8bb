"""
VARX system generation and the repeated-sampling data collector.

Provides:
- Random low-rank (and weakly low-rank) coefficient matrices Θ* = [A, B]^T
- Trajectory simulation under sub-Gaussian excitation and noise
- The independently repeated regression X = Z Θ* + W
- VARX(d) companion lifts
- The sub-Gaussian parameter and exact covariance of a regressor row
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

from models.schemas import DistSpec, RegressionData, SystemModel, Trajectory, parse_singular_spec
from utils.logger import setup_logger
from utils.matrix_ops import RankMismatchError, norm, numerical_rank
from utils.seeding import derive_seed, make_rng
from utils.validation import (
    ValidationError,
    validate_matrix,
    validate_positive_int,
    validate_real,
)

logger = setup_logger(__name__)


def _orthonormal_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(rows, cols)))
    # Fix column signs so the factor is a deterministic function of the draw
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _cap_spectral_radius(theta: np.ndarray, n: int, cap: float) -> np.ndarray:
    """Rescale the A block of Θ* so that rho(A) <= cap; B is left untouched."""
    A = theta[:n].T
    rho = _spectral_radius(A)
    if rho <= cap:
        return theta
    capped = theta.copy()
    capped[:n] *= cap / rho
    logger.debug(f"Scaled A by {cap / rho:.4g} to cap spectral radius {rho:.4g} at {cap}")
    return capped


def degrees_of_freedom(n: int, m: int, r: int) -> int:
    """Parameters of a rank-r (n+m) x n matrix: r(m + 2n - r)."""
    validate_positive_int(r, "r", min_val=0, max_val=n)
    return r * (m + 2 * n - r)


def generate_system(
    n: int,
    m: int,
    r: int,
    spectral_radius_cap: float = 0.9,
    singular_spec: str = "equal",
    seed: int = 0,
    scale: float = 1.0,
    sigma_w: float = 0.0,
) -> SystemModel:
    """Random VARX(1) system whose coefficient matrix has rank exactly r.

    Θ* = G1 D G2^T with orthonormal random G1 ((n+m) x r) and G2 (n x r);
    D holds r singular values, all equal to ``scale`` or decaying
    geometrically from it. If A's spectral radius exceeds the cap, the A
    block alone is shrunk, which keeps the rank.

    Raises:
        ValidationError: If r > n, the cap is not positive or the
            singular_spec is malformed
        RankMismatchError: If the requested spectrum is numerically
            rank deficient
    """
    validate_positive_int(n, "n", min_val=1)
    validate_positive_int(m, "m", min_val=1)
    validate_positive_int(r, "r", min_val=1)
    if r > n:
        raise ValidationError(f"rank r={r} is infeasible for an {n + m}x{n} coefficient matrix")
    validate_real(spectral_radius_cap, "spectral_radius_cap", min_val=0.0, strict_min=True)
    validate_real(scale, "scale", min_val=0.0, strict_min=True)
    kind, ratio = parse_singular_spec(singular_spec)

    rng = make_rng(seed)
    G1 = _orthonormal_columns(rng, n + m, r)
    G2 = _orthonormal_columns(rng, n, r)
    if kind == "equal":
        singulars = np.full(r, scale)
    else:
        singulars = scale * ratio ** np.arange(r)
    theta = _cap_spectral_radius((G1 * singulars) @ G2.T, n, spectral_radius_cap)

    found = numerical_rank(theta)
    if found != r:
        raise RankMismatchError(expected=r, found=found, shape=theta.shape)
    return SystemModel(A=theta[:n].T, B=theta[n:].T, rank_r=r, sigma_w=sigma_w)


def generate_weak_low_rank(
    n: int,
    m: int,
    q: float,
    radius: float,
    seed: int = 0,
    spectral_radius_cap: float = 0.9,
    sigma_w: float = 0.0,
) -> SystemModel:
    """System whose Θ* lies in the ball B(R_q) with a full decaying spectrum.

    For q > 0 the singular values are c / j for j = 1..n, with c chosen so
    that sum(sigma_j ** q) = radius. For q = 0 the ball is the set of
    matrices of rank <= radius, so floor(radius) singular values c / j with
    c = 1 are used. Capping rho(A) only shrinks singular values, so the
    membership survives it.

    Raises:
        ValidationError: On out-of-range q or radius
    """
    validate_positive_int(n, "n", min_val=1)
    validate_positive_int(m, "m", min_val=1)
    validate_real(q, "q", min_val=0.0, max_val=1.0)
    validate_real(radius, "radius", min_val=0.0, strict_min=True)

    if q == 0.0:
        k = min(n, int(radius))
        if k < 1:
            raise ValidationError(f"radius must be >= 1 when q=0, got {radius}")
        singulars = 1.0 / np.arange(1, k + 1)
    else:
        k = n
        decay = 1.0 / np.arange(1, k + 1)
        singulars = (radius / np.sum(decay ** q)) ** (1.0 / q) * decay

    rng = make_rng(seed)
    G1 = _orthonormal_columns(rng, n + m, k)
    G2 = _orthonormal_columns(rng, n, k)
    theta = _cap_spectral_radius((G1 * singulars) @ G2.T, n, spectral_radius_cap)
    return SystemModel(A=theta[:n].T, B=theta[n:].T, rank_r=numerical_rank(theta), sigma_w=sigma_w)


def replay_trajectory(model: SystemModel, inputs: np.ndarray, noises: np.ndarray) -> Trajectory:
    """Run x(t+1) = A x(t) + B u(t) + w(t) from x(0) = 0 on given streams.

    Args:
        model: The system
        inputs: T0 x m input stream
        noises: T0 x n additive state disturbances (already mapped through
            the noise gain)

    Raises:
        ValidationError: On shape mismatches
    """
    u = validate_matrix(inputs, "inputs", shape=(None, model.m))
    w = validate_matrix(noises, "noises", shape=(u.shape[0], model.n))
    T0 = u.shape[0]
    theta = model.theta_star
    states = np.zeros((T0 + 1, model.n))
    for t in range(T0):
        states[t + 1] = np.concatenate([states[t], u[t]]) @ theta + w[t]
    return Trajectory(states=states, inputs=u, noises=w)


def simulate_trajectory(
    model: SystemModel,
    T0: int,
    input: DistSpec,
    noise: DistSpec | None,
    seed: int,
) -> Trajectory:
    """Draw T0 inputs then T0 noises from one seeded stream and replay.

    Raises:
        ValidationError: If T0 < 2 or a DistSpec dimension does not fit
    """
    validate_positive_int(T0, "T0", min_val=2)
    if input.dim != model.m:
        raise ValidationError(f"input dim {input.dim} does not match m={model.m}")
    if noise is not None and noise.dim != model.noise_dim:
        raise ValidationError(f"noise dim {noise.dim} does not match noise dimension {model.noise_dim}")

    rng = make_rng(seed)
    u = input.sample(rng, T0)
    if noise is None:
        w = np.zeros((T0, model.n))
    else:
        w = noise.sample(rng, T0) @ model.gain.T
    return replay_trajectory(model, u, w)


def stack_trajectory(traj: Trajectory) -> RegressionData:
    """Within-trajectory regression: rows t = 0..T0-1 with z(t) = [x(t); u(t)].

    The rows are temporally dependent; only the least-squares baseline
    uses this form.
    """
    Z = np.hstack([traj.states[:-1], traj.inputs])
    return RegressionData(X=traj.states[1:], Z=Z, W=traj.noises)


def collect_repeated(
    model: SystemModel,
    N: int,
    T0: int,
    input: DistSpec,
    noise: DistSpec | None,
    seed: int,
) -> RegressionData:
    """Independently repeated sampling: one (z(T0-1), x(T0)) row per trajectory.

    Trajectory i runs on its own stream seeded with derive_seed(seed, i).
    The returned data carries W and the population covariance of a row.
    """
    validate_positive_int(N, "N", min_val=1)
    Z = np.empty((N, model.n + model.m))
    X = np.empty((N, model.n))
    W = np.empty((N, model.n))
    for i in range(N):
        traj = simulate_trajectory(model, T0, input, noise, derive_seed(seed, i))
        Z[i] = np.concatenate([traj.states[T0 - 1], traj.inputs[T0 - 1]])
        X[i] = traj.states[T0]
        W[i] = traj.noises[T0 - 1]
    Sigma = population_covariance(model, T0, input, noise)
    logger.debug(f"Collected {N} repeated samples (n={model.n}, m={model.m}, T0={T0})")
    return RegressionData(X=X, Z=Z, W=W, Sigma=Sigma)


def _companion(A_list: Sequence[np.ndarray], B: np.ndarray, sub_diagonal: bool, sigma_w: float) -> SystemModel:
    if len(A_list) < 1:
        raise ValidationError("A_list must contain at least one matrix")
    blocks = [validate_matrix(A_k, f"A_list[{k}]") for k, A_k in enumerate(A_list)]
    n = blocks[0].shape[0]
    for k, A_k in enumerate(blocks):
        if A_k.shape != (n, n):
            raise ValidationError(f"A_list[{k}] has shape {A_k.shape}, expected {(n, n)}")
    B = validate_matrix(B, "B", shape=(n, None))
    d = len(blocks)
    if d == 1:
        theta = np.hstack([blocks[0], B]).T
        return SystemModel(A=blocks[0], B=B, rank_r=numerical_rank(theta), sigma_w=sigma_w)

    A_lift = np.zeros((d * n, d * n))
    A_lift[:n] = np.hstack(blocks)
    if sub_diagonal:
        A_lift[n:, :-n] = np.eye((d - 1) * n)
    B_lift = np.vstack([B, np.zeros(((d - 1) * n, B.shape[1]))])
    gain = np.vstack([np.eye(n), np.zeros(((d - 1) * n, n))])
    theta = np.hstack([A_lift, B_lift]).T
    return SystemModel(A=A_lift, B=B_lift, rank_r=numerical_rank(theta), sigma_w=sigma_w, noise_gain=gain)


def companion_form(A_list: Sequence[np.ndarray], B: np.ndarray, sigma_w: float = 0.0) -> SystemModel:
    """Lift VARX(d) to VARX(1) on the stacked state [x(t); ...; x(t-d+1)].

    The sub-diagonal carries identity blocks so past states propagate;
    noise enters the top block only.

    Raises:
        ValidationError: On inconsistent block dimensions
    """
    return _companion(A_list, B, sub_diagonal=True, sigma_w=sigma_w)


def companion_form_literal(A_list: Sequence[np.ndarray], B: np.ndarray, sigma_w: float = 0.0) -> SystemModel:
    """Companion lift with a zero sub-diagonal (past states are not carried)."""
    return _companion(A_list, B, sub_diagonal=False, sigma_w=sigma_w)


def replay_varx(
    A_list: Sequence[np.ndarray],
    B: np.ndarray,
    inputs: np.ndarray,
    noises: np.ndarray,
) -> np.ndarray:
    """Direct VARX(d) recursion x(t+1) = sum_k A_k x(t-k) + B u(t) + w(t).

    States before time 0 are zero. Returns the (T0+1) x n state stream.
    """
    blocks = [validate_matrix(A_k, f"A_list[{k}]") for k, A_k in enumerate(A_list)]
    n = blocks[0].shape[0]
    B = validate_matrix(B, "B", shape=(n, None))
    u = validate_matrix(inputs, "inputs", shape=(None, B.shape[1]))
    w = validate_matrix(noises, "noises", shape=(u.shape[0], n))
    T0 = u.shape[0]
    states = np.zeros((T0 + 1, n))
    for t in range(T0):
        acc = B @ u[t] + w[t]
        for k, A_k in enumerate(blocks):
            if t - k >= 0:
                acc = acc + A_k @ states[t - k]
        states[t + 1] = acc
    return states


def _matrix_powers(A: np.ndarray, count: int) -> list[np.ndarray]:
    powers = [np.eye(A.shape[0])]
    for _ in range(count - 1):
        powers.append(A @ powers[-1])
    return powers


def subgaussian_param(model: SystemModel, T0: int, sigma_u: float, sigma_w: float) -> float:
    """Sub-Gaussian parameter sigma_z of a regressor row z(T0-1).

    sigma_z^2 = sum_{j=0}^{T0-2} (||A^j B||_op^2 sigma_u^2 + ||A^j E||_op^2 sigma_w^2) + sigma_u^2

    Raises:
        ValidationError: If T0 < 2, sigma_u <= 0 or sigma_w < 0
    """
    validate_positive_int(T0, "T0", min_val=2)
    validate_real(sigma_u, "sigma_u", min_val=0.0, strict_min=True)
    validate_real(sigma_w, "sigma_w", min_val=0.0)
    total = sigma_u ** 2
    gain = model.gain
    for power in _matrix_powers(model.A, T0 - 1):
        total += norm(power @ model.B, "operator") ** 2 * sigma_u ** 2
        if sigma_w > 0.0:
            total += norm(power @ gain, "operator") ** 2 * sigma_w ** 2
    return float(np.sqrt(total))


def population_covariance(
    model: SystemModel,
    T0: int,
    input: DistSpec,
    noise: DistSpec | None,
) -> np.ndarray:
    """Exact covariance of z(T0-1) = [x(T0-1); u(T0-1)].

    Σ_x = sum_{j=0}^{T0-2} A^j (var_u B B^T + var_w E E^T) (A^j)^T; the
    cross blocks vanish because u(T0-1) is independent of x(T0-1).
    """
    validate_positive_int(T0, "T0", min_val=2)
    var_u = input.variance
    var_w = 0.0 if noise is None else noise.variance
    gain = model.gain
    drive = var_u * model.B @ model.B.T + var_w * gain @ gain.T
    sigma_x = np.zeros((model.n, model.n))
    for power in _matrix_powers(model.A, T0 - 1):
        sigma_x += power @ drive @ power.T
    sigma_x = 0.5 * (sigma_x + sigma_x.T)
    return scipy.linalg.block_diag(sigma_x, var_u * np.eye(model.m))
