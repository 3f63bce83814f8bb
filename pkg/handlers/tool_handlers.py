"""
Tool handler for routing MCP tool calls to the numerical services.

This module acts as the bridge between the MCP protocol and the
service layer, handling argument parsing and response formatting.
Numerical work runs in a worker thread so the stdio loop stays
responsive.
"""

from __future__ import annotations

import asyncio
import json
from typing import Any, Callable, Coroutine

import scipy.linalg
from mcp.types import TextContent

from models.schemas import (
    BoundParams,
    DistSpec,
    ExperimentConfig,
    RegressionData,
    SolverConfig,
    SystemModel,
    ToolResult,
    json_safe,
)
from services.estimators import (
    alpha_param,
    lambda_rule,
    least_squares,
    nuclear_min_exact,
    nuclear_reg_solve,
)
from services.experiment_service import ExperimentRunner
from services.theory_lab import build_cert_report, predict_bounds
from services.varx_simulator import collect_repeated, generate_system, subgaussian_param
from utils.logger import setup_logger
from utils.matrix_ops import NumericalError, norm
from utils.seeding import derive_seed
from utils.validation import ValidationError, validate_choice, validate_positive_int, validate_real

DEFAULT_INPUT = {"family": "gaussian", "scale": 1.0}


class ToolHandler:
    """Routes MCP tool calls to service functions.

    Responsible for:
    - Parsing tool arguments into domain models
    - Delegating to the simulation, estimation and certification services
    - Formatting responses as MCP TextContent
    - Handling errors consistently
    """

    def __init__(self) -> None:
        self._logger = setup_logger(__name__)

    async def handle(
        self,
        name: str,
        arguments: dict[str, Any],
    ) -> list[TextContent]:
        """Route a tool call to the appropriate handler.

        Args:
            name: Tool name
            arguments: Tool arguments

        Returns:
            List of TextContent responses
        """
        try:
            handler = self._get_handler(name)
            if handler is None:
                return self._error_response(f"Unknown tool: {name}")

            result = await handler(arguments or {})
            return [TextContent(type="text", text=result.to_json())]

        except ValidationError as e:
            # Contract violations in the arguments
            self._logger.warning(f"Validation error in {name}: {e}")
            return self._error_response(f"Validation Error: {e}")
        except NumericalError as e:
            self._logger.error(f"Numerical error in {name}: {e}", exc_info=False)
            return self._error_response(f"Numerical Error: {e}")
        except (ValueError, KeyError, TypeError) as e:
            self._logger.warning(f"Expected error in {name}: {e}")
            return self._error_response(f"Error: {e}")
        except Exception:
            self._logger.exception(f"Unexpected error in tool {name}")
            return self._error_response(
                "An unexpected error occurred. Please report this issue."
            )

    def _get_handler(
        self, name: str
    ) -> Callable[[dict[str, Any]], Coroutine[Any, Any, ToolResult]] | None:
        handlers: dict[str, Callable[[dict[str, Any]], Coroutine[Any, Any, ToolResult]]] = {
            "simulate_system": self._handle_simulate_system,
            "estimate_coefficients": self._handle_estimate_coefficients,
            "certify_design": self._handle_certify_design,
            "predict_bounds": self._handle_predict_bounds,
            "run_experiment": self._handle_run_experiment,
        }
        return handlers.get(name)

    @staticmethod
    def _error_response(message: str) -> list[TextContent]:
        error = {"success": False, "message": message}
        return [TextContent(type="text", text=json.dumps(error, indent=2))]

    # =========================================================================
    # ARGUMENT PARSING
    # =========================================================================

    @staticmethod
    def _dist(descriptor: Any, dim: int, name: str) -> DistSpec:
        if not isinstance(descriptor, dict):
            raise ValidationError(f"{name} must be an object with 'family' and 'scale'")
        return DistSpec(family=descriptor.get("family"), scale=descriptor.get("scale"), dim=dim)

    def _simulate(self, arguments: dict[str, Any]) -> tuple[SystemModel, RegressionData, int, DistSpec, DistSpec | None]:
        """Build the system and its repeated-sampling data from tool arguments."""
        n, m, r, N = arguments["n"], arguments["m"], arguments["r"], arguments["N"]
        T0 = arguments.get("T0", 2)
        seed = arguments.get("seed", 0)
        validate_positive_int(N, "N", min_val=1)
        validate_positive_int(T0, "T0", min_val=2)
        validate_positive_int(seed, "seed", min_val=0)
        input_spec = self._dist(arguments.get("input", DEFAULT_INPUT), m, "input")
        raw_noise = arguments.get("noise")
        noise_spec = None if raw_noise is None else self._dist(raw_noise, n, "noise")
        model = generate_system(
            n, m, r,
            spectral_radius_cap=arguments.get("spectral_radius_cap", 0.9),
            seed=derive_seed(seed, 0),
            sigma_w=0.0 if noise_spec is None else noise_spec.scale,
        )
        data = collect_repeated(model, N, T0, input_spec, noise_spec, derive_seed(seed, 1))
        return model, data, T0, input_spec, noise_spec

    @staticmethod
    def _default_lambda(model: SystemModel, data: RegressionData, T0: int, input_spec: DistSpec,
                        noise_spec: DistSpec | None) -> tuple[float, float]:
        """(λ, α) from the 4α√((n+m)/N) rule with β = σ_z."""
        if noise_spec is None or noise_spec.scale == 0.0:
            raise ValidationError("lambda is required when the system is noiseless")
        beta = subgaussian_param(model, T0, input_spec.scale, noise_spec.scale)
        gamma_max = float(scipy.linalg.eigvalsh(data.Sigma)[-1])
        alpha = alpha_param(noise_spec.scale, beta, gamma_max)
        return lambda_rule(model.n, model.m, data.N, alpha), alpha

    # =========================================================================
    # TOOL HANDLERS
    # =========================================================================

    async def _handle_simulate_system(self, arguments: dict[str, Any]) -> ToolResult:
        def work() -> ToolResult:
            model, data, T0, input_spec, noise_spec = self._simulate(arguments)
            sigma_w = 0.0 if noise_spec is None else noise_spec.scale
            return ToolResult(
                success=True,
                message=f"Collected {data.N} repeated samples from a rank-{model.rank_r} system",
                data={
                    "system": model.to_dict(),
                    "theta_star": model.theta_star.tolist(),
                    "sigma_z": subgaussian_param(model, T0, input_spec.scale, sigma_w),
                    "regression": data.to_dict(),
                },
            )

        return await asyncio.to_thread(work)

    async def _handle_estimate_coefficients(self, arguments: dict[str, Any]) -> ToolResult:
        method = arguments.get("method", "nuclear_reg")
        validate_choice(method, "method", ("least_squares", "nuclear_reg", "nuclear_exact"))
        cfg = SolverConfig(max_iters=arguments.get("max_iters", SolverConfig.max_iters))

        def work() -> ToolResult:
            model, data, T0, input_spec, noise_spec = self._simulate(arguments)
            if method == "least_squares":
                estimate = least_squares(data)
            elif method == "nuclear_exact":
                estimate = nuclear_min_exact(data, cfg)
            else:
                lam = arguments.get("lambda")
                if lam is None:
                    lam, _ = self._default_lambda(model, data, T0, input_spec, noise_spec)
                validate_real(lam, "lambda", min_val=0.0, strict_min=True)
                estimate = nuclear_reg_solve(data, lam, cfg)
            delta = estimate.theta_hat - model.theta_star
            theta_norm = norm(model.theta_star, "frobenius")
            return ToolResult(
                success=True,
                message=f"{estimate.method} finished after {estimate.iters} iterations "
                        f"({'converged' if estimate.converged else 'not converged'})",
                data={
                    "estimate": estimate.to_dict(),
                    "theta_star": model.theta_star.tolist(),
                    "errors": {
                        "operator": norm(delta, "operator"),
                        "frobenius": norm(delta, "frobenius"),
                        "nuclear": norm(delta, "nuclear"),
                        "relative_frobenius": norm(delta, "frobenius") / theta_norm,
                    },
                },
            )

        return await asyncio.to_thread(work)

    async def _handle_certify_design(self, arguments: dict[str, Any]) -> ToolResult:
        trials = arguments.get("trials", 200)

        def work() -> ToolResult:
            model, data, T0, input_spec, noise_spec = self._simulate(arguments)
            lam = arguments.get("lambda")
            alpha = None
            if lam is None:
                lam, alpha = self._default_lambda(model, data, T0, input_spec, noise_spec)
            report = build_cert_report(
                data, model.theta_star, model.rank_r, lam,
                trials=trials, seed=derive_seed(arguments.get("seed", 0), 2), alpha=alpha,
            )
            verdicts = report.thresholds
            return ToolResult(
                success=True,
                message=f"Certificate: {sum(verdicts.values())}/{len(verdicts)} conditions hold",
                data={"report": report.to_dict()},
            )

        return await asyncio.to_thread(work)

    async def _handle_predict_bounds(self, arguments: dict[str, Any]) -> ToolResult:
        params = BoundParams(
            K=arguments["K"],
            lam=arguments["lam"],
            alpha=arguments["alpha"],
            gamma_min=arguments["gamma_min"],
            n=arguments["n"],
            m=arguments["m"],
            N=arguments["N"],
            r=arguments["r"],
            R_q=arguments.get("R_q", 0.0),
            tau_N=arguments.get("tau_N", 0.0),
        )
        return ToolResult(success=True, message="Bounds evaluated", data={"bounds": predict_bounds(params)})

    async def _handle_run_experiment(self, arguments: dict[str, Any]) -> ToolResult:
        config = ExperimentConfig.from_dict(arguments["config"])
        summary = await asyncio.to_thread(ExperimentRunner(config).run)
        return ToolResult(
            success=True,
            message=f"{config.experiment} finished; outputs in {config.output_dir}",
            data={"summary": json_safe(summary)},
        )
