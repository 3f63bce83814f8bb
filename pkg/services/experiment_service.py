"""
Experiment harness: seeded Monte Carlo sweeps over the sample size N.

Each experiment runs ``trials_per_cell`` independent (system, data,
estimator) pipelines per N in ``N_grid``, writes one CSV row per trial
with the seed that replays it, aggregates per-N cells with medians and
writes two-column plot files.

Experiments:
- phase_transition: noiseless nuclear-norm minimization success rate
- error_scaling: log-log slope of the regularized estimator's error
- bounds_check: the deterministic error bound and cone constraint
- rip_profile: weak-RIP constants of the repeated-sampling design
- weak_low_rank: regularized estimation of a Θ* in an ℓq ball
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy.linalg

from models.schemas import (
    BoundParams,
    CellResult,
    ExperimentConfig,
    RegressionData,
    SubspaceFrame,
    SystemModel,
    TrialRecord,
    WeakRipEstimate,
)
from services.estimators import alpha_param, lambda_rule, nuclear_min_exact, nuclear_reg_solve
from services.theory_lab import predict_bounds, s_value, weak_rip_profile
from services.varx_simulator import (
    collect_repeated,
    generate_system,
    generate_weak_low_rank,
    subgaussian_param,
)
from utils.logger import setup_logger
from utils.matrix_ops import NumericalError, norm, project, subspace_frame
from utils.seeding import derive_seed
from utils.serialization import format_float, write_json, write_plot_data, write_rows_csv
from utils.validation import ValidationError, validate_choice, validate_positive_int

logger = setup_logger(__name__)

WORKERS_ENV = "LOWRANK_VARX_WORKERS"
SUCCESS_REL_ERR = 1e-3
CONE_TOL = 1e-6
RIP_COLUMNS = (
    "N", "order", "K1", "K2", "delta_hat", "delta_exact", "samples", "ratio_min", "ratio_max", "failed",
)


def worker_count() -> int:
    """Worker processes for trial-level parallelism (1 runs in-process).

    Raises:
        ValidationError: If the environment value is not a positive integer
    """
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError as e:
        raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
    validate_positive_int(workers, WORKERS_ENV, min_val=1)
    return workers


@dataclass(frozen=True)
class TrialTask:
    """Everything a worker process needs to run one trial."""
    config: ExperimentConfig
    experiment: str
    N: int
    trial: int
    seed: int


# =============================================================================
# SINGLE TRIALS
# =============================================================================

def _build_system(cfg: ExperimentConfig, experiment: str, seed: int) -> SystemModel:
    if experiment == "weak_low_rank":
        return generate_weak_low_rank(
            cfg.n, cfg.m, cfg.q, cfg.radius, seed=seed,
            spectral_radius_cap=cfg.spectral_radius_cap, sigma_w=cfg.sigma_w,
        )
    return generate_system(
        cfg.n, cfg.m, cfg.r, spectral_radius_cap=cfg.spectral_radius_cap,
        singular_spec=cfg.singular_spec, seed=seed, scale=cfg.theta_scale, sigma_w=cfg.sigma_w,
    )


def _errors(theta_hat: np.ndarray, theta_star: np.ndarray) -> tuple[float, float, float]:
    delta = theta_hat - theta_star
    return norm(delta, "operator"), norm(delta, "frobenius"), norm(delta, "nuclear")


def regularization(cfg: ExperimentConfig, model: SystemModel, data: RegressionData) -> tuple[float, float, float]:
    """(λ, α, γ_min(Σ)) for a noisy trial.

    α uses β = cfg.beta or σ_z; λ is the 4α√((n+m)/N) rule times
    ``lambda_scale``.
    """
    eigenvalues = scipy.linalg.eigvalsh(data.Sigma)
    gamma_min, gamma_max = float(eigenvalues[0]), float(eigenvalues[-1])
    beta = cfg.beta if cfg.beta is not None else subgaussian_param(model, cfg.T0, cfg.sigma_u, cfg.sigma_w)
    alpha = alpha_param(cfg.sigma_w, beta, gamma_max)
    lam = cfg.lambda_scale * lambda_rule(cfg.n, cfg.m, data.N, alpha)
    return lam, alpha, gamma_min


def _noiseless_trial(task: TrialTask, model: SystemModel, data: RegressionData) -> dict[str, Any]:
    theta_star = model.theta_star
    try:
        estimate = nuclear_min_exact(data, task.config.solver)
    except NumericalError as e:
        logger.warning(f"Trial N={task.N} #{task.trial} failed: {e}")
        return {"success": False}
    op_err, frob_err, nuc_err = _errors(estimate.theta_hat, theta_star)
    return {
        "success": frob_err <= SUCCESS_REL_ERR * norm(theta_star, "frobenius"),
        "op_err": op_err,
        "frob_err": frob_err,
        "nuc_err": nuc_err,
        "kkt_residual": estimate.kkt_residual,
    }


def _regularized_trial(task: TrialTask, model: SystemModel, data: RegressionData) -> dict[str, Any]:
    cfg = task.config
    theta_star = model.theta_star
    lam, alpha, gamma_min = regularization(cfg, model, data)
    try:
        estimate = nuclear_reg_solve(data, lam, cfg.solver)
    except NumericalError as e:
        logger.warning(f"Trial N={task.N} #{task.trial} failed: {e}")
        return {"success": False, "lam": lam}
    op_err, frob_err, nuc_err = _errors(estimate.theta_hat, theta_star)
    row: dict[str, Any] = {
        "success": estimate.converged,
        "op_err": op_err,
        "frob_err": frob_err,
        "nuc_err": nuc_err,
        "lam": lam,
        "kkt_residual": estimate.kkt_residual,
    }

    cross = norm(data.Z.T @ data.W / data.N, "operator")
    curvature = max(float(scipy.linalg.eigvalsh(data.sample_covariance)[0]), 0.0)
    premise = lam >= 2.0 * cross and curvature > 0.0 and estimate.converged

    if task.experiment == "error_scaling":
        params = BoundParams(K=1.0, lam=lam, alpha=alpha, gamma_min=gamma_min, n=cfg.n, m=cfg.m, N=data.N, r=cfg.r)
        bound = predict_bounds(params)["op_corollary_proof"]
        row.update(premise_held=premise, bound=bound, violated=op_err > bound)
        return row

    if not premise:
        row["premise_held"] = False
        return row

    slack = 10.0 * cfg.solver.kkt_tol * frob_err
    if task.experiment == "weak_low_rank":
        params = BoundParams(
            K=curvature, lam=lam, alpha=alpha, gamma_min=gamma_min,
            n=cfg.n, m=cfg.m, N=data.N, r=max(model.rank_r, 1), R_q=cfg.radius,
        )
        bound = predict_bounds(params)["op_lq"]
        row.update(premise_held=True, bound=bound, violated=op_err > bound + slack)
        return row

    bound = 3.0 * lam / curvature
    frame = subspace_frame(theta_star, cfg.r)
    cone_violated = not _cone_holds(estimate.theta_hat - theta_star, frame, cfg.r, slack)
    row.update(premise_held=True, bound=bound, violated=op_err > bound + slack or cone_violated)
    return row


def _cone_holds(delta: np.ndarray, frame: SubspaceFrame, r: int, slack: float) -> bool:
    """Cone constraint and the nuclear-versus-Frobenius consequence with absolute slack."""
    bar = norm(project(frame, delta, "Mbar"), "nuclear")
    perp = norm(project(frame, delta, "MbarPerp"), "nuclear")
    nuclear = norm(delta, "nuclear")
    frob = norm(delta, "frobenius")
    return perp <= 3.0 * bar + slack + CONE_TOL * frob and nuclear <= 4.0 * math.sqrt(2.0 * r) * frob + slack + CONE_TOL * frob


def run_trial(task: TrialTask) -> TrialRecord:
    """Run one seeded trial; picklable for the process pool.

    The system draws from derive_seed(seed, 0) and the data from
    derive_seed(seed, 1), so the row's seed alone replays it.
    """
    cfg = task.config
    started = time.perf_counter()
    model = _build_system(cfg, task.experiment, derive_seed(task.seed, 0))
    data = collect_repeated(model, task.N, cfg.T0, cfg.input_spec(), cfg.noise_spec(), derive_seed(task.seed, 1))
    if task.experiment == "phase_transition":
        outcome = _noiseless_trial(task, model, data)
    else:
        outcome = _regularized_trial(task, model, data)
    wall_ms = int(round((time.perf_counter() - started) * 1000)) if cfg.record_timing else 0
    return TrialRecord(
        experiment=task.experiment,
        N=task.N,
        trial=task.trial,
        seed=task.seed,
        success=bool(outcome.get("success", False)),
        op_err=outcome.get("op_err", math.nan),
        frob_err=outcome.get("frob_err", math.nan),
        nuc_err=outcome.get("nuc_err", math.nan),
        lam=outcome.get("lam", math.nan),
        kkt_residual=outcome.get("kkt_residual", math.nan),
        premise_held=bool(outcome.get("premise_held", False)),
        bound=outcome.get("bound", math.nan),
        violated=bool(outcome.get("violated", False)),
        wall_ms=wall_ms,
    )


# =============================================================================
# AGGREGATION
# =============================================================================

def _median(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.median(finite)) if finite else math.nan


def aggregate_cell(N: int, records: list[TrialRecord], conditioned: bool) -> CellResult:
    """Reduce the trials of one N in trial-index order.

    With ``conditioned`` the violation rate is taken over premise-holding
    trials and the rest are counted as excluded.
    """
    ordered = sorted(records, key=lambda rec: rec.trial)
    eligible = [rec for rec in ordered if rec.premise_held] if conditioned else ordered
    violations = sum(rec.violated for rec in eligible)
    return CellResult(
        N=N,
        success_rate=sum(rec.success for rec in ordered) / len(ordered),
        median_op_err=_median([rec.op_err for rec in ordered]),
        median_frob_err=_median([rec.frob_err for rec in ordered]),
        bound_violation_rate=violations / len(eligible) if eligible else 0.0,
        wall_ms=sum(rec.wall_ms for rec in ordered),
        trials=len(ordered),
        excluded_trials=len(ordered) - len(eligible),
    )


def fit_slope(cells: list[CellResult]) -> float:
    """Least-squares slope of log(median op error) against log N."""
    points = [(c.N, c.median_op_err) for c in cells if math.isfinite(c.median_op_err) and c.median_op_err > 0]
    if len(points) < 2:
        return math.nan
    xs, ys = zip(*points)
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# =============================================================================
# RUNNER
# =============================================================================

class ExperimentRunner:
    """Runs one configured experiment and writes its outputs.

    Trial seeds are derive_seed(master_seed, cell_index, trial_index), so
    (config, master_seed) fixes every output byte when timing is off.
    """

    def __init__(self, config: ExperimentConfig, workers: int | None = None) -> None:
        """Initialize runner.

        Args:
            config: Validated experiment configuration
            workers: Process count; None reads LOWRANK_VARX_WORKERS
        """
        self._config = config
        self._workers = worker_count() if workers is None else workers
        validate_positive_int(self._workers, "workers", min_val=1)
        if config.noise_family is not None and config.experiment != "rip_profile" and config.sigma_w <= 0.0:
            raise ValidationError(f"{config.experiment} needs sigma_w > 0")

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    @property
    def output_dir(self) -> Path:
        return Path(self._config.output_dir)

    def trial_seed(self, cell_index: int, trial_index: int) -> int:
        return derive_seed(self._config.master_seed, cell_index, trial_index)

    def _tasks(self, experiment: str) -> list[TrialTask]:
        cfg = self._config
        return [
            TrialTask(config=cfg, experiment=experiment, N=N, trial=t, seed=self.trial_seed(c, t))
            for c, N in enumerate(cfg.N_grid)
            for t in range(cfg.trials_per_cell)
        ]

    def _map(self, func: Callable[[TrialTask], TrialRecord], tasks: list[TrialTask]) -> list[TrialRecord]:
        if self._workers == 1:
            return [func(task) for task in tasks]
        with ProcessPoolExecutor(max_workers=self._workers) as pool:
            return list(pool.map(func, tasks))

    def _sweep(self, experiment: str, conditioned: bool) -> tuple[list[CellResult], list[TrialRecord]]:
        cfg = self._config
        logger.info(
            f"Running {experiment}: n={cfg.n}, m={cfg.m}, r={cfg.r}, N_grid={list(cfg.N_grid)}, "
            f"{cfg.trials_per_cell} trials/cell, {self._workers} worker(s)"
        )
        records = self._map(run_trial, self._tasks(experiment))
        cells = []
        for N in cfg.N_grid:
            cell = aggregate_cell(N, [rec for rec in records if rec.N == N], conditioned)
            logger.info(
                f"{experiment} N={N}: success_rate={cell.success_rate:.3f}, "
                f"median_op_err={cell.median_op_err:.4g}, violations={cell.bound_violation_rate:.3f}"
            )
            cells.append(cell)
        self._write_trials(experiment, records, cells)
        return cells, records

    def _write_trials(self, experiment: str, records: list[TrialRecord], cells: list[CellResult]) -> None:
        out = self.output_dir
        write_rows_csv(out / f"{experiment}.csv", TrialRecord.COLUMNS, (rec.as_row() for rec in records))
        cell_columns = list(cells[0].to_dict().keys())
        write_rows_csv(
            out / f"{experiment}_cells.csv",
            cell_columns,
            ([format_float(v) if isinstance(v, float) else str(v) for v in cell.to_dict().values()] for cell in cells),
        )
        if experiment == "phase_transition":
            ys, header = [c.success_rate for c in cells], "N success_rate"
        else:
            ys, header = [c.median_op_err for c in cells], "N median_op_err"
        write_plot_data(out / f"{experiment}.dat", [c.N for c in cells], ys, header=header)

    def run_phase_transition(self) -> list[CellResult]:
        """Success rate of noiseless nuclear-norm minimization per N."""
        if self._config.noise_family is not None:
            raise ValidationError("phase_transition runs the noiseless program; set noise_family to null")
        return self._sweep("phase_transition", conditioned=False)[0]

    def run_error_scaling(self) -> tuple[list[CellResult], float]:
        """Median operator error per N and its fitted log-log slope."""
        self._require_noise("error_scaling")
        cells, _ = self._sweep("error_scaling", conditioned=False)
        slope = fit_slope(cells)
        logger.info(f"error_scaling fitted slope {slope:.4f}")
        return cells, slope

    def run_bounds_check(self) -> list[CellResult]:
        """Deterministic bound and cone checks on premise-holding trials."""
        self._require_noise("bounds_check")
        return self._sweep("bounds_check", conditioned=True)[0]

    def run_weak_low_rank(self) -> list[CellResult]:
        """Regularized estimation of a weakly low-rank Θ* against the ℓq bound."""
        self._require_noise("weak_low_rank")
        return self._sweep("weak_low_rank", conditioned=True)[0]

    def run_rip_profile(self) -> list[tuple[int, WeakRipEstimate]]:
        """Weak-RIP constants at orders r, 2r, (2+3s)r for every N.

        K1 and K2 are the square roots of the extreme eigenvalues of the
        population covariance.

        Raises:
            ValidationError: If that covariance is singular
        """
        cfg = self._config
        logger.info(f"Running rip_profile: N_grid={list(cfg.N_grid)}, {cfg.rip_trials} samples/order")
        profile: list[tuple[int, WeakRipEstimate]] = []
        for c, N in enumerate(cfg.N_grid):
            seed = self.trial_seed(c, 0)
            model = _build_system(cfg, "rip_profile", derive_seed(seed, 0))
            data = collect_repeated(model, N, cfg.T0, cfg.input_spec(), cfg.noise_spec(), derive_seed(seed, 1))
            eigenvalues = scipy.linalg.eigvalsh(data.Sigma)
            if eigenvalues[0] <= 1e-12 * max(eigenvalues[-1], 1e-300):
                raise ValidationError("Population covariance is singular; add noise or lengthen T0")
            K1, K2 = math.sqrt(eigenvalues[0]), math.sqrt(eigenvalues[-1])
            s = s_value(K1, K2)
            orders = [cfg.r, 2 * cfg.r, (2 + 3 * s) * cfg.r]
            estimates = weak_rip_profile(data.Z, orders, K1, K2, cfg.rip_trials, derive_seed(seed, 2), cols=cfg.n)
            profile.extend((N, estimate) for estimate in estimates)
            logger.info(f"rip_profile N={N}: delta_hat(r)={estimates[0].delta_hat:.4g}, s={s}")

        rows = []
        for N, est in profile:
            rows.append([
                str(N), str(est.r), format_float(est.K1), format_float(est.K2), format_float(est.delta_hat),
                format_float(est.delta_exact), str(est.samples), format_float(est.ratio_min),
                format_float(est.ratio_max), str(int(est.failed)),
            ])
        write_rows_csv(self.output_dir / "rip_profile.csv", RIP_COLUMNS, rows)
        first_order = [(N, est.delta_hat) for N, est in profile if est.r == cfg.r]
        write_plot_data(
            self.output_dir / "rip_profile.dat",
            [N for N, _ in first_order], [d for _, d in first_order], header="N delta_hat(r)",
        )
        return profile

    def replay_trial(self, N: int, seed: int, experiment: str | None = None) -> TrialRecord:
        """Rerun a single trial from the seed recorded on its CSV row."""
        experiment = experiment or self._config.experiment
        validate_choice(experiment, "experiment", ("phase_transition", "error_scaling", "bounds_check", "weak_low_rank"))
        validate_positive_int(N, "N", min_val=1)
        return run_trial(TrialTask(config=self._config, experiment=experiment, N=N, trial=0, seed=seed))

    def run(self) -> dict[str, Any]:
        """Run the configured experiment and write summary.json.

        Returns:
            Summary with the per-N cells (and slope, or the RIP profile)
        """
        experiment = self._config.experiment
        summary: dict[str, Any] = {"experiment": experiment, "output_dir": str(self.output_dir)}
        if experiment == "rip_profile":
            summary["profile"] = [{"N": N, **est.to_dict()} for N, est in self.run_rip_profile()]
        elif experiment == "error_scaling":
            cells, slope = self.run_error_scaling()
            summary["cells"] = [c.to_dict() for c in cells]
            summary["slope"] = slope
        else:
            runner = {
                "phase_transition": self.run_phase_transition,
                "bounds_check": self.run_bounds_check,
                "weak_low_rank": self.run_weak_low_rank,
            }[experiment]
            summary["cells"] = [c.to_dict() for c in runner()]
        write_json(self.output_dir / "summary.json", summary)
        return summary

    def _require_noise(self, experiment: str) -> None:
        if self._config.noise_family is None:
            raise ValidationError(f"{experiment} needs a noise_family")
