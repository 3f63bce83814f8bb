"""
Tests for the least-squares, regularized and equality-constrained estimators.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from models.schemas import DistSpec, RegressionData, SolverConfig
from services.estimators import (
    AffineProjector,
    InfeasibleProgramError,
    alpha_param,
    kkt_check,
    lambda_rule,
    least_squares,
    loss_gradient,
    loss_value,
    nuclear_min_exact,
    nuclear_reg_solve,
    rank_constrained_oracle,
)
from services.theory_lab import empirical_weak_rip
from services.varx_simulator import collect_repeated, generate_system, simulate_trajectory, stack_trajectory
from utils.matrix_ops import norm, svt
from utils.validation import ValidationError


def low_rank(rng: np.random.Generator, p: int, n: int, r: int) -> np.ndarray:
    return rng.normal(size=(p, r)) @ rng.normal(size=(r, n)) / np.sqrt(p)


def make_data(seed: int, N: int, p: int, n: int, r: int, sigma: float = 0.0) -> tuple[RegressionData, np.ndarray]:
    rng = np.random.default_rng(seed)
    theta = low_rank(rng, p, n, r)
    Z = rng.normal(size=(N, p))
    W = sigma * rng.normal(size=(N, n))
    return RegressionData(X=Z @ theta + W, Z=Z, W=W), theta


class TestRules:
    """Regularization constants."""

    def test_lambda_rule(self):
        assert lambda_rule(40, 60, 400, 1.0) == pytest.approx(2.0)
        assert lambda_rule(2, 2, 16, 0.5) == pytest.approx(1.0)

    def test_lambda_rule_rejects_bad_alpha(self):
        with pytest.raises(ValidationError):
            lambda_rule(2, 2, 16, 0.0)

    def test_alpha_param(self):
        assert alpha_param(1.0, 0.0, 2.0) == pytest.approx(2.0)
        expected = np.sqrt(2.0 * 0.25 * ((32.0 * np.sqrt(6.0) + 1.0) * 4.0 + 1.0))
        assert alpha_param(0.5, 2.0, 1.0) == pytest.approx(expected)


class TestLoss:
    """Quadratic loss."""

    def test_gradient_matches_finite_differences(self):
        data, _ = make_data(20, 30, 4, 3, 2, sigma=0.5)
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(5):
            theta = rng.normal(size=(4, 3))
            direction = rng.normal(size=(4, 3))
            numeric = (loss_value(theta + h * direction, data) - loss_value(theta - h * direction, data)) / (2 * h)
            analytic = float(np.sum(loss_gradient(theta, data) * direction))
            assert numeric == pytest.approx(analytic, rel=1e-4)


class TestLeastSquares:
    """Unregularized baseline."""

    def test_noiseless_recovery(self):
        data, theta = make_data(1, 40, 5, 3, 2)
        estimate = least_squares(data)
        np.testing.assert_allclose(estimate.theta_hat, theta, atol=1e-10)
        assert estimate.unique
        assert estimate.method == "least_squares:pooled_final_state"
        assert estimate.kkt_residual <= 1e-10

    def test_rank_deficient_returns_min_norm(self):
        rng = np.random.default_rng(2)
        base = rng.normal(size=(20, 2))
        Z = np.hstack([base, base[:, :1]])
        X = rng.normal(size=(20, 2))
        estimate = least_squares(RegressionData(X=X, Z=Z))
        assert not estimate.unique
        np.testing.assert_allclose(estimate.theta_hat, np.linalg.pinv(Z) @ X, atol=1e-10)

    def test_stacked_trajectories_pool(self):
        model = generate_system(3, 1, 3, seed=4)
        u = DistSpec(family="gaussian", scale=1.0, dim=1)
        stacks = [
            stack_trajectory(simulate_trajectory(model, 12, u, None, seed=s)) for s in range(3)
        ]
        estimate = least_squares(stacks, mode="stacked_trajectory")
        np.testing.assert_allclose(estimate.theta_hat, model.theta_star, atol=1e-8)
        assert estimate.method == "least_squares:stacked_trajectory"

    def test_sequence_needs_stacked_mode(self):
        data, _ = make_data(1, 10, 3, 2, 1)
        with pytest.raises(ValidationError):
            least_squares([data, data])


class TestNuclearRegSolve:
    """Proximal gradient on the regularized program."""

    def test_orthogonal_design_is_one_prox_step(self):
        rng = np.random.default_rng(3)
        N, p, n = 30, 5, 3
        Q, _ = np.linalg.qr(rng.normal(size=(N, p)))
        Z = np.sqrt(N) * Q
        X = Z @ low_rank(rng, p, n, 1) + 0.1 * rng.normal(size=(N, n))
        data = RegressionData(X=X, Z=Z)
        estimate = nuclear_reg_solve(data, 0.2)
        np.testing.assert_allclose(estimate.theta_hat, svt(Z.T @ X / N, 0.2), atol=1e-8)
        assert estimate.converged

    def test_scalar_soft_threshold(self):
        rng = np.random.default_rng(4)
        Z = rng.normal(size=(25, 1))
        X = 0.8 * Z + 0.3 * rng.normal(size=(25, 1))
        data = RegressionData(X=X, Z=Z)
        s = float(Z[:, 0] @ Z[:, 0]) / 25
        c = float(Z[:, 0] @ X[:, 0]) / 25
        lam = 0.1
        expected = np.sign(c) * max(abs(c) - lam, 0.0) / s
        estimate = nuclear_reg_solve(data, lam)
        assert estimate.theta_hat[0, 0] == pytest.approx(expected, rel=1e-8)
        assert kkt_check(np.array([[expected]]), data, lam) <= 1e-12

    def test_large_lambda_gives_zero(self):
        data, _ = make_data(5, 30, 5, 3, 2, sigma=0.1)
        threshold = norm(data.Z.T @ data.X / data.N, "operator")
        estimate = nuclear_reg_solve(data, 1.01 * threshold)
        np.testing.assert_array_equal(estimate.theta_hat, 0.0)
        assert estimate.converged
        assert estimate.kkt_residual <= 1e-12

    def test_reaches_kkt_tolerance(self):
        data, _ = make_data(6, 60, 6, 4, 2, sigma=0.2)
        estimate = nuclear_reg_solve(data, 0.1, SolverConfig(kkt_tol=1e-7))
        assert estimate.converged
        assert estimate.kkt_residual <= 1e-7
        assert kkt_check(estimate.theta_hat, data, 0.1) <= 1e-7

    def test_beats_perturbations(self):
        data, _ = make_data(7, 40, 5, 3, 1, sigma=0.3)
        lam = 0.15
        estimate = nuclear_reg_solve(data, lam, SolverConfig(kkt_tol=1e-9, max_iters=20000))

        def objective(theta):
            return loss_value(theta, data) + lam * norm(theta, "nuclear")

        best = objective(estimate.theta_hat)
        assert best == pytest.approx(estimate.objective, rel=1e-10)
        rng = np.random.default_rng(0)
        for _ in range(200):
            candidate = estimate.theta_hat + 1e-3 * rng.normal(size=estimate.theta_hat.shape)
            assert objective(candidate) >= best - 1e-10

    def test_unaccelerated_trace_is_monotone(self):
        data, _ = make_data(8, 40, 5, 3, 2, sigma=0.2)
        estimate = nuclear_reg_solve(data, 0.1, SolverConfig(acceleration=False, max_iters=300))
        trace = np.asarray(estimate.objective_trace)
        assert trace.size == estimate.iters
        assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))

    def test_iteration_cap_reports_not_converged(self):
        data, _ = make_data(9, 40, 5, 3, 2, sigma=0.2)
        estimate = nuclear_reg_solve(data, 0.05, SolverConfig(max_iters=1))
        assert not estimate.converged
        assert estimate.iters == 1
        assert np.isfinite(estimate.kkt_residual)

    def test_rejects_non_positive_lambda(self):
        data, _ = make_data(1, 10, 3, 2, 1)
        with pytest.raises(ValidationError):
            nuclear_reg_solve(data, 0.0)

    def test_kkt_far_from_optimum(self):
        data, _ = make_data(6, 60, 6, 4, 2, sigma=0.2)
        assert kkt_check(np.ones((6, 4)), data, 0.1) > 1e-3


class TestNuclearMinExact:
    """Equality-constrained nuclear-norm minimization."""

    def test_full_column_rank_is_fixed_point(self):
        data, theta = make_data(10, 12, 5, 3, 1)
        estimate = nuclear_min_exact(data)
        assert estimate.iters == 0
        assert estimate.converged
        assert estimate.lambda_used == 0.0
        np.testing.assert_allclose(estimate.theta_hat, theta, atol=1e-9)

    def test_underdetermined_solution_is_feasible_and_no_larger(self):
        data, theta = make_data(11, 4, 6, 4, 1)
        estimate = nuclear_min_exact(data, SolverConfig(max_iters=20000))
        feasibility = np.linalg.norm(data.Z @ estimate.theta_hat - data.X) / np.linalg.norm(data.X)
        assert feasibility <= 1e-8
        assert norm(estimate.theta_hat, "nuclear") <= norm(theta, "nuclear") * (1 + 1e-3)
        assert estimate.method == "nuclear_exact"

    def test_inconsistent_system_raises(self):
        rng = np.random.default_rng(12)
        data = RegressionData(X=rng.normal(size=(20, 2)), Z=rng.normal(size=(20, 3)))
        with pytest.raises(InfeasibleProgramError) as excinfo:
            nuclear_min_exact(data)
        assert excinfo.value.residual > 1e-3


class TestAffineProjector:
    """Projection onto the feasible set."""

    def test_row_mode(self):
        data, _ = make_data(13, 3, 6, 2, 1)
        project = AffineProjector(data, 1e-8)
        assert project.mode == "row"
        rng = np.random.default_rng(0)
        Y = rng.normal(size=(6, 2))
        P = project(Y)
        np.testing.assert_allclose(data.Z @ P, data.X, atol=1e-10)
        np.testing.assert_allclose(project(P), P, atol=1e-10)

    def test_pinv_mode(self):
        rng = np.random.default_rng(14)
        base = rng.normal(size=(3, 4))
        Z = np.vstack([base, base[:1]])
        theta = rng.normal(size=(4, 2))
        data = RegressionData(X=Z @ theta, Z=Z)
        project = AffineProjector(data, 1e-8)
        assert project.mode == "pinv"
        P = project(np.zeros((4, 2)))
        np.testing.assert_allclose(Z @ P, data.X, atol=1e-10)

    def test_column_mode(self):
        data, theta = make_data(15, 10, 4, 2, 1)
        project = AffineProjector(data, 1e-8)
        assert project.mode == "column"
        np.testing.assert_allclose(project(np.zeros((4, 2))), theta, atol=1e-9)


class TestRankOracle:
    """Alternating projections baseline."""

    def test_overdetermined_returns_fixed_point(self):
        data, theta = make_data(16, 10, 4, 3, 1)
        estimate = rank_constrained_oracle(data, 1)
        assert estimate.method == "rank_oracle"
        np.testing.assert_allclose(estimate.theta_hat, theta, atol=1e-9)

    def test_underdetermined_stays_feasible(self):
        data, _ = make_data(17, 5, 6, 4, 1)
        estimate = rank_constrained_oracle(data, 1, SolverConfig(max_iters=200))
        np.testing.assert_allclose(data.Z @ estimate.theta_hat, data.X, atol=1e-8)

    def test_agrees_with_exact_program_when_certified(self):
        model = generate_system(3, 2, 1, seed=41, sigma_w=0.5)
        u = DistSpec(family="gaussian", scale=1.0, dim=2)
        w = DistSpec(family="gaussian", scale=0.5, dim=3)
        compared = uncertified = 0
        for N in (3, 200):
            for seed in range(3):
                design = collect_repeated(model, N, 3, u, w, seed=seed)
                data = RegressionData(X=design.Z @ model.theta_star, Z=design.Z, Sigma=design.Sigma)
                eigenvalues = np.linalg.eigvalsh(design.Sigma)
                certificate = empirical_weak_rip(
                    data.Z, 2 * model.rank_r, np.sqrt(eigenvalues[0]), np.sqrt(eigenvalues[-1]),
                    trials=100, seed=seed, cols=3,
                )
                if certificate.delta_hat >= 1.0:
                    uncertified += 1
                    continue
                exact = nuclear_min_exact(data)
                oracle = rank_constrained_oracle(data, model.rank_r)
                np.testing.assert_allclose(exact.theta_hat, oracle.theta_hat, atol=1e-6)
                np.testing.assert_allclose(exact.theta_hat, model.theta_star, atol=1e-6)
                compared += 1
        assert compared == 3
        assert uncertified == 3

    def test_rank_above_shape_rejected(self):
        data, _ = make_data(17, 5, 6, 4, 1)
        with pytest.raises(ValidationError):
            rank_constrained_oracle(data, 5)
