"""
Empirical certification of the recovery and estimation conditions.

Provides:
- Weak restricted isometry estimates over nested Monte Carlo pools
- Operator-norm curvature of the quadratic loss
- Covariance concentration and cross-term events
- Closed-form error-bound predictions
- Cone-constraint ratios of an estimation error
- CertReport assembly for one design
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import scipy.linalg

from models.schemas import (
    BoundParams,
    CertReport,
    ConeCheck,
    CovarianceDeviation,
    CurvatureEstimate,
    RegressionData,
    SubspaceFrame,
    ThresholdCheck,
    WeakRipEstimate,
)
from utils.logger import setup_logger
from utils.matrix_ops import norm, project, singular_values
from utils.seeding import derive_seed, make_rng
from utils.validation import ValidationError, validate_matrix, validate_positive_int, validate_real

logger = setup_logger(__name__)

EXACT_RECOVERY_DELTA = 5.0 - 2.0 * math.sqrt(6.0)
MIN_RIP_TRIALS = 100


# =============================================================================
# WEAK RIP
# =============================================================================

def _rip_delta(ratio_min: float, ratio_max: float, K1: float, K2: float) -> float:
    return max(0.0, 1.0 - ratio_min / K1, ratio_max / K2 - 1.0)


def _extreme_ratios(Z: np.ndarray) -> tuple[float, float]:
    """min and max of ||Z Δ||_F / √N over unit-Frobenius Δ.

    Both are attained by rank-one Δ = v e1^T with v a right singular
    vector of Z (or a null vector when N < p).
    """
    N, p = Z.shape
    sigma = singular_values(Z)
    low = float(sigma[-1]) if N >= p else 0.0
    return low / math.sqrt(N), float(sigma[0]) / math.sqrt(N)


def _sample_ratios(Z: np.ndarray, order: int, cols: int, trials: int, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    N, p = Z.shape
    ratios = np.empty(trials)
    for i in range(trials):
        delta = rng.normal(size=(p, order)) @ rng.normal(size=(order, cols))
        delta /= np.linalg.norm(delta)
        ratios[i] = np.linalg.norm(Z @ delta) / math.sqrt(N)
    return ratios


def _validate_rip_args(Z: np.ndarray, K1: float, K2: float, trials: int) -> np.ndarray:
    Z = validate_matrix(Z, "Z")
    validate_real(K1, "K1", min_val=0.0, strict_min=True)
    validate_real(K2, "K2", min_val=K1)
    validate_positive_int(trials, "trials", min_val=MIN_RIP_TRIALS)
    return Z


def weak_rip_profile(
    Z: np.ndarray,
    orders: Sequence[int],
    K1: float,
    K2: float,
    trials: int,
    seed: int,
    cols: int | None = None,
    include_witnesses: bool = True,
) -> list[WeakRipEstimate]:
    """Weak-RIP estimates for increasing orders over nested sample pools.

    The pool of order r_k holds every sample drawn for the orders before
    it, so delta_hat is non-decreasing in the order by construction.
    Orders above min(p, cols) sample at that cap, since every matrix of
    that shape has rank at most the cap.

    Args:
        Z: N x p design
        orders: rank orders, sorted ascending on output
        K1, K2: lower and upper isometry constants, K2 >= K1 > 0
        trials: random rank-r directions drawn per order (>= 100)
        seed: master seed; order r draws from derive_seed(seed, r)
        cols: column count of Δ (defaults to p)
        include_witnesses: add the two extremal rank-one directions to
            every pool, which makes the estimate exact

    Raises:
        ValidationError: On invalid constants, trial budget or orders
    """
    Z = _validate_rip_args(Z, K1, K2, trials)
    N, p = Z.shape
    cols = p if cols is None else cols
    validate_positive_int(cols, "cols", min_val=1)
    if not orders:
        raise ValidationError("orders must not be empty")
    for order in orders:
        validate_positive_int(order, "order", min_val=1)

    exact_min, exact_max = _extreme_ratios(Z)
    delta_exact = _rip_delta(exact_min, exact_max, K1, K2)
    pool_min, pool_max = (exact_min, exact_max) if include_witnesses else (math.inf, -math.inf)
    samples = 2 if include_witnesses else 0
    cap = min(p, cols)

    estimates = []
    for order in sorted(set(orders)):
        ratios = _sample_ratios(Z, min(order, cap), cols, trials, derive_seed(seed, order))
        pool_min = min(pool_min, float(ratios.min()))
        pool_max = max(pool_max, float(ratios.max()))
        samples += trials
        estimates.append(
            WeakRipEstimate(
                r=order,
                K1=float(K1),
                K2=float(K2),
                delta_hat=_rip_delta(pool_min, pool_max, K1, K2),
                samples=samples,
                ratio_min=pool_min,
                ratio_max=pool_max,
                delta_exact=delta_exact,
            )
        )
    return estimates


def empirical_weak_rip(
    Z: np.ndarray,
    r: int,
    K1: float,
    K2: float,
    trials: int,
    seed: int,
    cols: int | None = None,
    include_witnesses: bool = True,
) -> WeakRipEstimate:
    """Smallest δ with K1(1-δ) <= ||ZΔ||_F/√N <= K2(1+δ) over a sampled pool.

    Samples unit-Frobenius Δ = G1 G2^T with Gaussian r-column factors.
    ``failed`` is set when no δ < 1 fits (for instance Z = 0).

    Raises:
        ValidationError: If r exceeds min(p, cols) or other arguments are invalid
    """
    Z = validate_matrix(Z, "Z")
    cols = Z.shape[1] if cols is None else cols
    validate_positive_int(r, "r", min_val=1, max_val=min(Z.shape[1], cols))
    return weak_rip_profile(Z, [r], K1, K2, trials, seed, cols, include_witnesses)[0]


def s_value(K1: float, K2: float) -> int:
    """1 if K1 == K2, else floor((K2/K1)^2) + 1."""
    validate_real(K1, "K1", min_val=0.0, strict_min=True)
    validate_real(K2, "K2", min_val=K1)
    if K1 == K2:
        return 1
    return int(math.floor((K2 / K1) ** 2)) + 1


def recovery_verdict(delta_2r: float, delta_order_2p3s_r: float, s: int) -> tuple[bool, bool]:
    """(uniqueness, exact_recovery) from two weak-RIP constants.

    A failed certificate can be passed as any value >= 1 or NaN.
    """
    validate_positive_int(s, "s", min_val=1)
    uniqueness = bool(delta_2r < 1.0)
    exact_recovery = bool(delta_order_2p3s_r < EXACT_RECOVERY_DELTA)
    return uniqueness, exact_recovery


# =============================================================================
# CURVATURE AND CONCENTRATION
# =============================================================================

def _sample_covariance(Z: np.ndarray) -> np.ndarray:
    return Z.T @ Z / Z.shape[0]


def curvature_estimate(Z: np.ndarray, trials: int, seed: int, cols: int | None = None) -> CurvatureEstimate:
    """Operator-norm curvature of the quadratic loss.

    The certified curvature is σ_min(Σ̂); the sampled minimum of
    ||Σ̂Δ||_op over random unit-operator-norm Δ is reported as a cross-check
    and never falls below it.
    """
    Z = validate_matrix(Z, "Z")
    validate_positive_int(trials, "trials", min_val=1)
    sigma_hat = _sample_covariance(Z)
    p = sigma_hat.shape[0]
    cols = p if cols is None else cols
    curvature = max(float(scipy.linalg.eigvalsh(sigma_hat)[0]), 0.0)

    rng = make_rng(seed)
    sampled = math.inf
    for _ in range(trials):
        delta = rng.normal(size=(p, cols))
        delta /= norm(delta, "operator")
        sampled = min(sampled, norm(sigma_hat @ delta, "operator"))
    return CurvatureEstimate(curvature=curvature, sampled_min=sampled, trials=trials)


def covariance_deviation(Z: np.ndarray, Sigma: np.ndarray) -> CovarianceDeviation:
    """||Z^T Z / N - Σ||_op with the concentration envelope ``bound_at``.

    Raises:
        ValidationError: On a dimension mismatch
    """
    Z = validate_matrix(Z, "Z")
    Sigma = validate_matrix(Sigma, "Sigma", shape=(Z.shape[1], Z.shape[1]))
    dev = norm(_sample_covariance(Z) - Sigma, "operator")
    return CovarianceDeviation(dev=dev, dim=Z.shape[1], n_samples=Z.shape[0])


def concentration_tail(N: int, delta: float) -> float:
    """Failure-probability envelope exp(-N min(δ/(16√2), δ²/512))."""
    validate_positive_int(N, "N", min_val=1)
    validate_real(delta, "delta", min_val=0.0, strict_min=True)
    return math.exp(-N * min(delta / (16.0 * math.sqrt(2.0)), delta ** 2 / 512.0))


def sample_covariance_event(Z: np.ndarray, beta: float, gamma_max: float) -> ThresholdCheck:
    """||Σ̂||_op against (32√6 + 1) β² + γ_max; exceeded means the event failed."""
    Z = validate_matrix(Z, "Z")
    validate_real(beta, "beta", min_val=0.0)
    validate_real(gamma_max, "gamma_max", min_val=0.0)
    value = norm(_sample_covariance(Z), "operator")
    return ThresholdCheck(value=value, threshold=(32.0 * math.sqrt(6.0) + 1.0) * beta ** 2 + gamma_max)


def population_curvature_event(Z: np.ndarray, Sigma: np.ndarray) -> ThresholdCheck:
    """σ_min(Σ̂) against γ_min(Σ)/2; the event holds when value >= threshold."""
    Z = validate_matrix(Z, "Z")
    Sigma = validate_matrix(Sigma, "Sigma", shape=(Z.shape[1], Z.shape[1]))
    value = max(float(scipy.linalg.eigvalsh(_sample_covariance(Z))[0]), 0.0)
    gamma_min = max(float(scipy.linalg.eigvalsh(Sigma)[0]), 0.0)
    return ThresholdCheck(value=value, threshold=gamma_min / 2.0)


def cross_term(Z: np.ndarray, W: np.ndarray, alpha: float) -> ThresholdCheck:
    """||Z^T W / N||_op against 2 α √(p / N).

    Raises:
        ValidationError: If the row counts differ
    """
    Z = validate_matrix(Z, "Z")
    W = validate_matrix(W, "W", shape=(Z.shape[0], None))
    validate_real(alpha, "alpha", min_val=0.0)
    N, p = Z.shape
    value = norm(Z.T @ W / N, "operator")
    return ThresholdCheck(value=value, threshold=2.0 * alpha * math.sqrt(p / N))


# =============================================================================
# BOUNDS AND CONES
# =============================================================================

def predict_bounds(params: BoundParams) -> dict[str, float]:
    """Closed-form error bounds.

    Returns:
        op_deterministic: 3λ/K
        frob_deterministic: 4√(2r) · 3λ/K
        op_corollary_stmt: 12α/γ_min · √((n+m)/N)
        op_corollary_proof: 24α/γ_min · √((n+m)/N)
        frob_remark: 96√(2r) α/γ_min · √((n+m)/N)
        op_lq: max(32 τ_N R_q / K, 6λ/K)
    """
    root = math.sqrt((params.n + params.m) / params.N)
    op_deterministic = 3.0 * params.lam / params.K
    return {
        "op_deterministic": op_deterministic,
        "frob_deterministic": 4.0 * math.sqrt(2.0 * params.r) * op_deterministic,
        "op_corollary_stmt": 12.0 * params.alpha / params.gamma_min * root,
        "op_corollary_proof": 24.0 * params.alpha / params.gamma_min * root,
        "frob_remark": 96.0 * math.sqrt(2.0 * params.r) * params.alpha / params.gamma_min * root,
        "op_lq": max(32.0 * params.tau_N * params.R_q / params.K, 6.0 * params.lam / params.K),
    }


def cone_check(delta: np.ndarray, frame: SubspaceFrame, r: int) -> ConeCheck:
    """Cone ratios of an estimation error Δ̂ = Θ̂ - Θ*.

    The denominators are floored at 1e-15 ||Δ̂||_F so an error lying
    entirely in M̄ gives ratio 0.
    """
    validate_positive_int(r, "r", min_val=1)
    D = validate_matrix(delta, "delta", shape=frame.shape)
    frob = norm(D, "frobenius")
    floor = max(1e-15 * frob, 1e-300)
    bar = norm(project(frame, D, "Mbar"), "nuclear")
    perp = norm(project(frame, D, "MbarPerp"), "nuclear")
    nuclear = norm(D, "nuclear")
    return ConeCheck(
        ratio=perp / (3.0 * max(bar, floor)),
        nuc_vs_frob=nuclear / (4.0 * math.sqrt(2.0 * r) * max(frob, 1e-300)),
        nuc_vs_op=nuclear / (32.0 * r * max(norm(D, "operator"), 1e-300)),
        noiseless_ratio=perp / max(bar, floor),
    )


# =============================================================================
# REPORT
# =============================================================================

def build_cert_report(
    data: RegressionData,
    theta_star: np.ndarray,
    r: int,
    lam: float,
    trials: int = 200,
    seed: int = 0,
    alpha: float | None = None,
) -> CertReport:
    """Certify one design against the recovery and estimation conditions.

    K1 and K2 are the square roots of the extreme eigenvalues of the
    population covariance (the sample covariance when Σ is absent).
    Weak RIP is estimated at orders r, 2r and (2+3s)r on one nested pool.
    The cross term is ||∇L(Θ*)||_op = ||Z^T W / N||_op.

    Raises:
        ValidationError: If the covariance is singular, which leaves the
            weak-RIP constants undefined
    """
    theta = validate_matrix(theta_star, "theta_star", shape=(data.p, data.n))
    validate_real(lam, "lam", min_val=0.0)
    Sigma = data.Sigma if data.Sigma is not None else data.sample_covariance
    eigenvalues = scipy.linalg.eigvalsh(Sigma)
    gamma_min, gamma_max = float(eigenvalues[0]), float(eigenvalues[-1])
    if gamma_min <= 1e-12 * max(gamma_max, 1e-300):
        raise ValidationError("Covariance of a regressor row is singular; weak-RIP constants are undefined")
    K1, K2 = math.sqrt(gamma_min), math.sqrt(gamma_max)
    s = s_value(K1, K2)

    weak_rip = weak_rip_profile(
        data.Z, [r, 2 * r, (2 + 3 * s) * r], K1, K2, trials, seed, cols=data.n,
    )
    curvature = curvature_estimate(data.Z, trials=10, seed=derive_seed(seed, 1), cols=data.n).curvature
    cov_dev = covariance_deviation(data.Z, Sigma).dev
    cross = norm(data.Z.T @ (data.X - data.Z @ theta) / data.N, "operator")

    bounds: dict[str, float] = {}
    if curvature > 0.0 and lam > 0.0:
        predicted = predict_bounds(
            BoundParams(
                K=curvature, lam=lam, alpha=alpha or 0.0, gamma_min=gamma_min,
                n=data.n, m=data.p - data.n, N=data.N, r=r,
            )
        )
        keys = predicted.keys() if alpha is not None else ("op_deterministic", "frob_deterministic")
        bounds = {key: predicted[key] for key in keys}

    logger.info(f"Certified design N={data.N}, p={data.p}, r={r}: s={s}, K={curvature:.4g}")
    return CertReport(
        rank=r,
        weak_rip=tuple(weak_rip),
        curvature_K=curvature,
        cov_dev_op=cov_dev,
        cross_term_op=cross,
        s_value=s,
        lambda_used=float(lam),
        predicted_bounds=bounds,
    )
