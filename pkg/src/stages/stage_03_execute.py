"""
Stage 03: EXECUTE
Run the numerical experiment named by the subcommand

Each subcommand has a runner that turns the config into result tables,
optional binary fields and a short summary. The numerical work runs in a
worker thread so the event loop driving the workflow stays responsive.
"""

import asyncio
import logging
import math
from datetime import datetime
from typing import Any, Callable, Dict

import numpy as np
from pydantic import ValidationError

from ..pam.asymptotics import (
    TheoremId,
    TheoremParams,
    fit_exponent,
    limit_constant,
    moment_constant,
    moment_exponent,
    moment_growth_experiment,
    second_moment_closed_form,
    spatial_max_experiment,
    tail_rate,
    tail_rate_via_legendre,
)
from ..pam.covariance import CovarianceSpec, Regime, TimeKind, regime_classify
from ..pam.feynman_kac import annealed_moment_fractional, annealed_moment_white_time
from ..pam.noise_field import GridSpec
from ..pam.spde_solver import (
    IncrementLaw,
    PicardConfig,
    SolveConfig,
    picard_localized_ensemble,
    solve,
    solve_ensemble,
)
from ..pam.variational import (
    VariationalGrid,
    solve_E_time_dependent,
    solve_E_time_independent,
    solve_M,
)
from ..pipeline.run_config import RunConfig, build_grid, build_spec, theorem_params
from ..pipeline.state_manager import ResultTable, RunState, RunStateManager, StageStatus
from ..utils.errors import ConfigError, NumericalError
from ..utils.rng import realization_seed
from .selftest import SelftestSuite

logger = logging.getLogger(__name__)

_TAIL_IDS = (TheoremId.TH5_1, TheoremId.TH5_2, TheoremId.TH5_3, TheoremId.TH5_4)
_MOMENT_IDS = (TheoremId.PROP3_1, TheoremId.PROP3_2, TheoremId.PROP3_3)


def _invalid(err: ValidationError, what: str) -> ConfigError:
    return ConfigError(f"invalid {what}: {'; '.join(e['msg'] for e in err.errors())}", module="cli")


def _moment_statement(regime: Regime) -> TheoremId:
    if regime == Regime.BOUNDED:
        return TheoremId.PROP3_1
    if regime.white_in_time:
        return TheoremId.PROP3_3
    return TheoremId.PROP3_2


def _mean_and_stderr(samples: np.ndarray) -> tuple:
    n = samples.size
    mean = math.fsum(samples.tolist()) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum(((samples - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


class ExecuteStage:
    """
    Stage 03: EXECUTE

    Responsibilities:
    - Build solver inputs from the config
    - Run the experiment for the subcommand
    - Collect CSV tables, binary fields and a printed summary

    Mode: deterministic given (config, seed)
    """

    def __init__(self, state_manager: RunStateManager):
        self.state_manager = state_manager
        self.stage_id = 3
        self.stage_name = "EXECUTE"
        self._runners: Dict[str, Callable[[RunConfig], Dict[str, Any]]] = {
            "simulate": self._run_simulate,
            "moments": self._run_moments,
            "variational": self._run_variational,
            "scan": self._run_scan,
            "tail": self._run_tail,
            "constants": self._run_constants,
            "selftest": self._run_selftest,
        }

    async def execute(self, run_id: str) -> RunState:
        start_time = datetime.now()

        try:
            current_state = self.state_manager.get_current_state(run_id)
            cfg = current_state["config"]
            logger.info(f"Starting {self.stage_name} stage: {cfg.subcommand}")

            result = await asyncio.to_thread(self._runners[cfg.subcommand], cfg)

            execution_time = (datetime.now() - start_time).total_seconds() * 1000
            self.state_manager.log_stage_execution(
                run_id=run_id,
                stage_id=self.stage_id,
                stage_name=self.stage_name,
                status=StageStatus.COMPLETED,
                operations=[cfg.subcommand],
                duration_ms=execution_time,
                output={"tables": [t.name for t in result["tables"]], "summary": result["summary"]},
            )

            updated_state = self.state_manager.update_state(
                run_id=run_id,
                updates={
                    "tables": result["tables"],
                    "fields": result.get("fields", {}),
                    "summary": result["summary"],
                    "failures": result.get("failures", 0),
                },
                stage_name=self.stage_name,
            )
            logger.info(f"{self.stage_name} completed in {execution_time:.0f}ms")
            return updated_state

        except Exception as e:
            execution_time = (datetime.now() - start_time).total_seconds() * 1000
            self.state_manager.log_stage_execution(
                run_id=run_id,
                stage_id=self.stage_id,
                stage_name=self.stage_name,
                status=StageStatus.FAILED,
                duration_ms=execution_time,
                error_message=str(e),
            )
            logger.error(f"{self.stage_name} failed: {str(e)}")
            raise

    # ------------------------------------------------------------------
    # lattice runs
    # ------------------------------------------------------------------

    def _solve_config(self, cfg: RunConfig, spec: CovarianceSpec, grid: GridSpec) -> SolveConfig:
        try:
            return SolveConfig(
                spec=spec,
                grid=grid,
                kernel_epsilon=cfg.get("params.kernel_epsilon"),
                increments=IncrementLaw(cfg.get("params.increments", IncrementLaw.TWO_POINT.value)),
                initial=cfg.get("params.initial", 1.0),
            )
        except ValidationError as e:
            raise _invalid(e, "solver config")

    def _run_simulate(self, cfg: RunConfig) -> Dict[str, Any]:
        spec = build_spec(cfg)
        grid = build_grid(cfg, spec.d)
        solve_cfg = self._solve_config(cfg, spec, grid)
        n = cfg.get("params.realizations")
        seeds = [realization_seed(cfg.seed, i) for i in range(n)]

        beta = cfg.get("params.picard_beta")
        if beta:
            fields = picard_localized_ensemble(solve_cfg, PicardConfig(beta=beta), seeds, cfg.workers)
        else:
            fields = solve_ensemble(solve_cfg, seeds, cfg.workers)

        o = grid.origin_index
        xs = grid.positions()
        line = fields[(slice(None), slice(None)) + (o,) * (grid.d - 1)]
        t = grid.t_final
        rows = [[s, t, x, u] for s, field_line in zip(seeds, line) for x, u in zip(xs, field_line)]

        at_origin = fields[(slice(None),) + (o,) * grid.d]
        mean, mean_se = _mean_and_stderr(at_origin)
        second, second_se = _mean_and_stderr(at_origin ** 2)
        closed = ""
        if solve_cfg.white_space and solve_cfg.initial == 1.0:
            closed = second_moment_closed_form(spec.theta, t)
        summary_row = [n, t, 0.0, mean, mean_se, second, second_se, closed]

        out_fields = {}
        if cfg.get("params.dump_fields", False):
            traj_cfg = solve_cfg.model_copy(update={"store_trajectory": True})
            out_fields["trajectory_0"] = solve(traj_cfg, seeds[0]).trajectory
            out_fields["final_fields"] = fields.reshape(len(seeds), -1)

        logger.info(f"Mean u(t,0) = {mean:.6g} +/- {mean_se:.2g}, E u^2 = {second:.6g} +/- {second_se:.2g}")
        return {
            "tables": [
                ResultTable(name="simulate", header=["seed", "t", "x", "u"], rows=rows,
                            title="u(t,x) per realization", plot=("x", "u", "")),
                ResultTable(name="simulate_summary",
                            header=["n", "t", "x", "mean_u", "stderr_mean", "second_moment",
                                    "stderr_second", "closed_form"],
                            rows=[summary_row], title="moments of u(t,0)"),
            ],
            "fields": out_fields,
            "summary": {"mean_u": mean, "stderr_mean": mean_se, "second_moment": second,
                        "stderr_second": second_se, "closed_form": closed},
        }

    def _run_scan(self, cfg: RunConfig) -> Dict[str, Any]:
        spec = build_spec(cfg)
        grid = build_grid(cfg, spec.d)
        solve_cfg = self._solve_config(cfg, spec, grid)
        seeds = [realization_seed(cfg.seed, i) for i in range(cfg.get("params.realizations"))]
        radii = cfg.get("params.radii")

        records = spatial_max_experiment(solve_cfg, seeds, radii, cfg.workers)
        fit = fit_exponent(records, seed=cfg.seed)

        ref_exponent, ref_constant = "", ""
        if regime_classify(spec).regime == Regime.WHITE_DIRAC:
            ref_exponent = 2.0 / 3.0
            ref_constant = limit_constant(TheoremId.TH1_7, TheoremParams(theta=spec.theta, t=grid.t_final))

        logger.info(f"Scan fit: b = {fit.exponent:.4f} +/- {fit.half_width:.4f} (reference {ref_exponent})")
        return {
            "tables": [
                ResultTable(name="scan", header=["seed", "t", "R", "max_log_u"],
                            rows=[[r.seed, r.t, r.R, r.max_log_u] for r in records],
                            title="log max u over |x| <= R", plot=("R", "max_log_u", "x")),
                ResultTable(name="scan_fit",
                            header=["exponent", "intercept", "half_width", "bootstrap_half_width", "n_points",
                                    "nonlinear", "reference_exponent", "reference_constant"],
                            rows=[[fit.exponent, fit.intercept, fit.half_width, fit.bootstrap_half_width,
                                   fit.n_points, fit.nonlinear, ref_exponent, ref_constant]],
                            title="fitted max log u = a (log R)^b"),
            ],
            "summary": {"exponent": fit.exponent, "half_width": fit.half_width, "intercept": fit.intercept,
                        "reference_exponent": ref_exponent, "reference_constant": ref_constant},
        }

    # ------------------------------------------------------------------
    # path and variational runs
    # ------------------------------------------------------------------

    def _run_moments(self, cfg: RunConfig) -> Dict[str, Any]:
        spec = build_spec(cfg)
        regime = regime_classify(spec).regime
        t = cfg.get("params.t")
        ms = cfg.get("params.m")
        n_mc = cfg.get("params.n_mc")
        n_steps = cfg.get("params.n_steps")

        if spec.time.kind == TimeKind.WHITE:
            eps = cfg.get("params.epsilons")
            estimator = lambda m: annealed_moment_white_time(m, t, spec, eps, n_mc, realization_seed(cfg.seed, m),
                                                            n_steps, cfg.workers)
        else:
            epsilon = cfg.get("params.epsilon", 0.0)
            estimator = lambda m: annealed_moment_fractional(m, t, spec, n_mc, realization_seed(cfg.seed, m),
                                                             n_steps, epsilon, cfg.workers)
        estimates = {m: estimator(m) for m in ms}
        rows = [[m, t, spec.theta, regime.value, e.epsilon, e.value, e.log_value, e.stderr, e.n_samples]
                for m, e in estimates.items()]
        tables = [ResultTable(
            name="moments",
            header=["m", "t", "theta", "regime", "epsilon", "estimate", "log_estimate", "stderr", "n_samples"],
            rows=rows, title="log E u(t,0)^m", plot=("m", "log_estimate", "xy"))]
        summary: Dict[str, Any] = {f"log_moment_m{m}": e.log_value for m, e in estimates.items()}

        if len(ms) >= 2:
            statement = _moment_statement(regime)
            params = theorem_params(cfg)
            try:
                predicted_q = moment_exponent(statement, params)
                predicted_c = moment_constant(statement, params)
            except ConfigError as e:
                logger.warning(f"No prediction for {statement.value}: {e}")
                predicted_q, predicted_c = "", ""
            try:
                growth = moment_growth_experiment(regime.value, t, spec.theta, ms, estimates.__getitem__)
                tables.append(ResultTable(
                    name="moments_fit",
                    header=["regime", "exponent", "constant", "half_width", "statement",
                            "predicted_exponent", "predicted_constant"],
                    rows=[[regime.value, growth.exponent, growth.constant, growth.half_width,
                           statement.value, predicted_q, predicted_c]],
                    title="log E u^m = c m^q"))
                summary.update({"exponent": growth.exponent, "predicted_exponent": predicted_q})
            except NumericalError as e:
                logger.warning(f"Moment growth fit skipped: {e}")

        return {"tables": tables, "summary": summary}

    def _run_variational(self, cfg: RunConfig) -> Dict[str, Any]:
        spec = build_spec(cfg)
        try:
            grid = VariationalGrid(d=spec.d, nx=cfg.get("params.nx"), half_width=cfg.get("params.half_width"),
                                   ns=cfg.get("params.ns"), tol=cfg.get("params.tol"),
                                   n_starts=cfg.get("params.n_starts"))
        except ValidationError as e:
            raise _invalid(e, "variational grid")

        problem = cfg.get("params.problem")
        beta: Any = ""
        if problem == "M":
            beta = cfg.get("params.beta")
            result = solve_M(beta, spec.space, grid, seed=cfg.seed, workers=cfg.workers)
        elif spec.time.kind == TimeKind.WHITE:
            result = solve_E_time_independent(spec.space, grid, seed=cfg.seed, workers=cfg.workers)
        else:
            result = solve_E_time_dependent(spec, grid, seed=cfg.seed, workers=cfg.workers)

        alpha = spec.space.scaling_exponent
        row = [result.problem, spec.time.alpha0, "" if alpha is None else alpha, spec.d, beta, result.value,
               result.residual, result.iterations, result.half_width, result.nx]
        fields = {"profile": result.profile.g} if cfg.get("params.dump_fields", False) else {}
        return {
            "tables": [
                ResultTable(name="variational",
                            header=["problem", "alpha0", "alpha", "d", "beta", "value", "residual",
                                    "iterations", "L", "nx"],
                            rows=[row], title="variational value"),
                ResultTable(name="variational_history", header=["step", "value"],
                            rows=[[i, v] for i, v in enumerate(result.history)],
                            title="accepted ascent steps", plot=("step", "value", "")),
            ],
            "fields": fields,
            "summary": {"problem": result.problem, "value": result.value, "residual": result.residual},
        }

    # ------------------------------------------------------------------
    # formula runs
    # ------------------------------------------------------------------

    def _theorem(self, cfg: RunConfig) -> TheoremId:
        return TheoremId(cfg.get("params.theorem"))

    def _run_tail(self, cfg: RunConfig) -> Dict[str, Any]:
        theorem = self._theorem(cfg)
        if theorem not in _TAIL_IDS:
            raise ConfigError(f"{theorem.value} is not a tail statement; use one of "
                              f"{', '.join(t.value for t in _TAIL_IDS)}", module="cli")
        params = theorem_params(cfg)
        rows = [[theorem.value, lam, tail_rate(theorem, params, lam), tail_rate_via_legendre(theorem, params, lam)]
                for lam in cfg.get("params.lambdas")]
        return {
            "tables": [ResultTable(name="tail", header=["theorem", "lambda", "rate", "rate_legendre"], rows=rows,
                                   title=f"tail rate {theorem.value}", plot=("lambda", "rate", ""))],
            "summary": {f"{theorem.value}(lambda={r[1]:g})": r[2] for r in rows},
        }

    def _run_constants(self, cfg: RunConfig) -> Dict[str, Any]:
        theorem = self._theorem(cfg)
        if theorem in _TAIL_IDS:
            raise ConfigError(f"{theorem.value} needs lambda; use the tail subcommand", module="cli")
        params = theorem_params(cfg)
        exponent: Any = ""
        if theorem in _MOMENT_IDS:
            value = moment_constant(theorem, params)
            exponent = moment_exponent(theorem, params)
        else:
            value = limit_constant(theorem, params)
        row = [theorem.value, params.theta, params.t, params.d, params.alpha0,
               "" if params.alpha is None else params.alpha, value, exponent]
        return {
            "tables": [ResultTable(name="constants",
                                   header=["theorem", "theta", "t", "d", "alpha0", "alpha", "value", "m_exponent"],
                                   rows=[row], title=f"{theorem.value} constant")],
            "summary": {theorem.value: value},
        }

    def _run_selftest(self, cfg: RunConfig) -> Dict[str, Any]:
        results = SelftestSuite(seed=cfg.seed, workers=cfg.workers).run()
        failures = sum(1 for r in results if not r.passed)
        rows = [[r.name, "PASS" if r.passed else "FAIL", r.detail] for r in results]
        return {
            "tables": [ResultTable(name="selftest", header=["check", "status", "detail"], rows=rows,
                                   title="selftest")],
            "summary": {r.name: "PASS" if r.passed else "FAIL" for r in results},
            "failures": failures,
        }
