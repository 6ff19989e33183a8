"""
Stage 02: ADMIT
Classify the covariance and decide whether the run may proceed

Runs regime_classify on the configured covariance and, for the lattice solvers,
the Dalang check. The routing after this stage ends the workflow when the
covariance is inadmissible.
"""

import logging
from datetime import datetime
from typing import List

from ..pam.asymptotics import TheoremId, holds_in
from ..pam.covariance import dalang_check, regime_classify
from ..pipeline.run_config import build_spec
from ..pipeline.state_manager import RunState, RunStateManager, StageStatus

logger = logging.getLogger(__name__)

# subcommands that march the lattice equation
LATTICE_RUNS = ("simulate", "scan")


class AdmitStage:
    """
    Stage 02: ADMIT

    Responsibilities:
    - Build the covariance spec from the config
    - Classify its regime and collect violated constraints
    - Check the Dalang condition for lattice runs
    - Warn when a requested theorem does not belong to the regime
    """

    def __init__(self, state_manager: RunStateManager):
        self.state_manager = state_manager
        self.stage_id = 2
        self.stage_name = "ADMIT"

    async def execute(self, run_id: str) -> RunState:
        start_time = datetime.now()

        try:
            logger.info(f"Starting {self.stage_name} stage")
            current_state = self.state_manager.get_current_state(run_id)
            cfg = current_state["config"]

            if cfg.subcommand == "selftest":
                classification = {"regime": None, "violations": [], "note": "selftest builds its own specs"}
            else:
                spec = build_spec(cfg)
                report = regime_classify(spec)
                violations: List[str] = list(report.violations)
                if not violations and cfg.subcommand in LATTICE_RUNS and not dalang_check(spec):
                    violations.append("Dalang condition fails: integral of gamma_hat/(1+|lambda|^2) diverges")
                classification = {"regime": report.regime.value, "violations": violations}
                theorem = cfg.get("params.theorem")
                if theorem and not violations and not holds_in(TheoremId(theorem), report.regime):
                    logger.warning(f"{theorem} is stated for another regime than {report.regime.value}; "
                                   f"evaluating the formula anyway")

            admissible = not classification["violations"]
            for v in classification["violations"]:
                logger.error(f"Admissibility violation: {v}")

            execution_time = (datetime.now() - start_time).total_seconds() * 1000
            self.state_manager.log_stage_execution(
                run_id=run_id,
                stage_id=self.stage_id,
                stage_name=self.stage_name,
                status=StageStatus.COMPLETED,
                operations=["regime_classify", "dalang_check"],
                duration_ms=execution_time,
                output=classification,
            )

            updated_state = self.state_manager.update_state(
                run_id=run_id,
                updates={"classification": classification, "admissible": admissible,
                         "exit_code": 0 if admissible else 4},
                stage_name=self.stage_name,
            )
            logger.info(f"{self.stage_name} completed: regime {classification['regime']}, "
                        f"admissible={admissible}")
            return updated_state

        except Exception as e:
            execution_time = (datetime.now() - start_time).total_seconds() * 1000
            self.state_manager.log_stage_execution(
                run_id=run_id,
                stage_id=self.stage_id,
                stage_name=self.stage_name,
                status=StageStatus.FAILED,
                operations=["regime_classify"],
                duration_ms=execution_time,
                error_message=str(e),
            )
            logger.error(f"{self.stage_name} failed: {str(e)}")
            raise
