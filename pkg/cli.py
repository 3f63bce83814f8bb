#!/usr/bin/env python3
"""
Command line for lowrank-varx-id experiments.

Usage:
    lowrank-varx simulate --config cfg.json --out data/
    lowrank-varx estimate --data data/bundle.json --method nuclear_reg
    lowrank-varx phase-transition --config cfg.json --trials 20
    lowrank-varx error-scaling | bounds-check | rip-profile | weak-low-rank --config cfg.json

Results go to stdout as JSON, logs to stderr. Exit codes: 0 on
completion, 2 on configuration or validation errors, 3 on numerical
failures. The worker count comes from LOWRANK_VARX_WORKERS.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

import numpy as np
import scipy.linalg

from models.schemas import ExperimentConfig, SolverConfig
from services.estimators import alpha_param, lambda_rule, least_squares, nuclear_min_exact, nuclear_reg_solve
from services.experiment_service import ExperimentRunner
from services.varx_simulator import collect_repeated, generate_system, subgaussian_param
from utils.logger import set_package_level, setup_logger
from utils.matrix_ops import NumericalError, norm
from utils.seeding import derive_seed
from utils.serialization import read_bundle, write_bundle, write_regression_csv
from utils.validation import ValidationError, validate_positive_int

logger = setup_logger("cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

EXPERIMENT_COMMANDS = {
    "phase-transition": "phase_transition",
    "error-scaling": "error_scaling",
    "bounds-check": "bounds_check",
    "rip-profile": "rip_profile",
    "weak-low-rank": "weak_low_rank",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lowrank-varx",
        description="Identify low-rank VARX coefficient matrices and certify the recovery conditions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool) -> None:
        p.add_argument("--config", required=config_required, help="JSON experiment config")
        p.add_argument("--seed", type=int, help="Override master_seed")
        p.add_argument("--out", help="Override output_dir")
        p.add_argument("--verbose", action="store_true", help="Debug logging on stderr")

    simulate = sub.add_parser("simulate", help="Generate a system and write its regression data")
    common(simulate, config_required=True)
    simulate.add_argument("--N", type=int, help="Sample count (default: first N_grid entry)")

    estimate = sub.add_parser("estimate", help="Estimate Θ* from a data bundle or a simulated design")
    common(estimate, config_required=False)
    estimate.add_argument("--data", help="JSON bundle written by 'simulate'")
    estimate.add_argument("--N", type=int, help="Sample count when simulating from --config")
    estimate.add_argument(
        "--method", choices=["least_squares", "nuclear_reg", "nuclear_exact"], default="nuclear_reg",
    )
    estimate.add_argument("--lambda", dest="lam", type=float, help="Regularization weight")

    for command in EXPERIMENT_COMMANDS:
        p = sub.add_parser(command, help=f"Run the {EXPERIMENT_COMMANDS[command]} experiment")
        common(p, config_required=True)
        p.add_argument("--trials", type=int, help="Override trials_per_cell")
    return parser


def load_config(args: argparse.Namespace, experiment: str | None = None) -> ExperimentConfig:
    """Load the JSON config and apply command-line overrides.

    Raises:
        ValidationError: If the file or an override is invalid
    """
    cfg = ExperimentConfig.from_file(args.config)
    overrides: dict[str, Any] = {}
    if experiment is not None and experiment != cfg.experiment:
        overrides["experiment"] = experiment
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "trials", None) is not None:
        overrides["trials_per_cell"] = args.trials
    return replace(cfg, **overrides) if overrides else cfg


def _simulate(cfg: ExperimentConfig, N: int):
    model = generate_system(
        cfg.n, cfg.m, cfg.r, spectral_radius_cap=cfg.spectral_radius_cap,
        singular_spec=cfg.singular_spec, seed=derive_seed(cfg.master_seed, 0),
        scale=cfg.theta_scale, sigma_w=cfg.sigma_w,
    )
    data = collect_repeated(model, N, cfg.T0, cfg.input_spec(), cfg.noise_spec(), derive_seed(cfg.master_seed, 1))
    extra: dict[str, Any] = {"theta_star": model.theta_star.tolist(), "rank": model.rank_r}
    if cfg.noise_family is not None and cfg.sigma_w > 0.0:
        beta = cfg.beta if cfg.beta is not None else subgaussian_param(model, cfg.T0, cfg.sigma_u, cfg.sigma_w)
        alpha = alpha_param(cfg.sigma_w, beta, float(scipy.linalg.eigvalsh(data.Sigma)[-1]))
        extra["lambda_rule"] = cfg.lambda_scale * lambda_rule(cfg.n, cfg.m, N, alpha)
    return model, data, extra


def cmd_simulate(args: argparse.Namespace) -> dict[str, Any]:
    cfg = load_config(args)
    N = args.N if args.N is not None else cfg.N_grid[0]
    validate_positive_int(N, "N", min_val=1)
    _, data, extra = _simulate(cfg, N)
    out = Path(cfg.output_dir)
    files = [str(p) for p in write_regression_csv(out, data)]
    files.append(str(write_bundle(out / "bundle.json", data, extra=extra)))
    return {"command": "simulate", "N": N, "files": files, **{k: v for k, v in extra.items() if k != "theta_star"}}


def cmd_estimate(args: argparse.Namespace) -> dict[str, Any]:
    if args.data is None and args.config is None:
        raise ValidationError("estimate needs --data or --config")
    solver = SolverConfig()
    out: Path | None = Path(args.out) if args.out else None
    if args.data is not None:
        data, _, extra = read_bundle(args.data)
        if args.config is not None:
            solver = load_config(args).solver
    else:
        cfg = load_config(args)
        solver = cfg.solver
        N = args.N if args.N is not None else cfg.N_grid[0]
        validate_positive_int(N, "N", min_val=1)
        _, data, extra = _simulate(cfg, N)
        out = out or Path(cfg.output_dir)

    if args.method == "least_squares":
        estimate = least_squares(data)
    elif args.method == "nuclear_exact":
        estimate = nuclear_min_exact(data, solver)
    else:
        lam = args.lam if args.lam is not None else extra.get("lambda_rule")
        if lam is None:
            raise ValidationError("--lambda is required for noiseless data")
        estimate = nuclear_reg_solve(data, float(lam), solver)

    result: dict[str, Any] = {
        "command": "estimate",
        "method": estimate.method,
        "lambda": estimate.lambda_used,
        "iters": estimate.iters,
        "converged": estimate.converged,
        "kkt_residual": estimate.kkt_residual,
        "objective": estimate.objective,
    }
    if "theta_star" in extra:
        delta = estimate.theta_hat - np.asarray(extra["theta_star"], dtype=float)
        result["op_err"] = norm(delta, "operator")
        result["frob_err"] = norm(delta, "frobenius")
    if out is not None:
        result["bundle"] = str(write_bundle(out / "estimate.json", data, estimate=estimate, extra=extra))
    return result


def cmd_experiment(args: argparse.Namespace) -> dict[str, Any]:
    cfg = load_config(args, EXPERIMENT_COMMANDS[args.command])
    return ExperimentRunner(cfg).run()


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_package_level(logging.DEBUG)
    try:
        if args.command == "simulate":
            result = cmd_simulate(args)
        elif args.command == "estimate":
            result = cmd_estimate(args)
        else:
            result = cmd_experiment(args)
    except ValidationError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    print(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
