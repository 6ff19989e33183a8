"""
Stage 01: INTAKE
Accept and validate the resolved run config

This is the entry point of the workflow. It receives the config assembled by
the CLI and creates the initial state that flows through the other stages.
"""

import logging
from datetime import datetime
from typing import Any, Dict, List

from ..pam.asymptotics import TheoremId
from ..pam.covariance import SpaceKind, TimeKind
from ..pam.spde_solver import IncrementLaw
from ..pipeline.run_config import SUBCOMMANDS, RunConfig, valid_keys
from ..pipeline.state_manager import RunState, RunStateManager, StageStatus
from ..utils.errors import ConfigError
from ..utils.validators import (
    validate_choice,
    validate_grid,
    validate_increasing,
    validate_keys,
    validate_positive,
)

logger = logging.getLogger(__name__)


class IntakeStage:
    """
    Stage 01: INTAKE

    Responsibilities:
    - Accept the RunConfig
    - Validate keys, choices and numeric ranges
    - Create the initial run state

    Payload only: no numerical work happens here.
    """

    def __init__(self, state_manager: RunStateManager):
        self.state_manager = state_manager
        self.stage_id = 1
        self.stage_name = "INTAKE"

    async def execute(self, input_payload: Dict[str, Any]) -> RunState:
        """
        Execute the INTAKE stage.

        Args:
            input_payload: {"config": RunConfig}

        Returns:
            Initial RunState
        """
        start_time = datetime.now()
        logger.info(f"Starting {self.stage_name} stage")

        validation_errors = self._validate_payload(input_payload)
        if validation_errors:
            error_msg = f"Config validation failed: {'; '.join(validation_errors)}"
            logger.error(error_msg)
            raise ConfigError(error_msg, module="cli")

        config: RunConfig = input_payload["config"]
        initial_state = self.state_manager.create_initial_state(config)

        execution_time = (datetime.now() - start_time).total_seconds() * 1000
        self.state_manager.log_stage_execution(
            run_id=initial_state["run_id"],
            stage_id=self.stage_id,
            stage_name=self.stage_name,
            status=StageStatus.COMPLETED,
            operations=["accept_config"],
            duration_ms=execution_time,
            output={"subcommand": config.subcommand, "seed": config.seed, "validation_passed": True},
        )

        logger.info(f"{self.stage_name} completed: {config.subcommand} run {initial_state['run_id']}")
        return initial_state

    def _validate_payload(self, payload: Dict[str, Any]) -> List[str]:
        """
        Validate the config carried by the payload.

        Returns:
            List of validation errors (empty if valid)
        """
        config = payload.get("config")
        if not isinstance(config, RunConfig):
            return ["Missing required field: config"]
        if config.subcommand not in SUBCOMMANDS:
            return [f"Invalid subcommand '{config.subcommand}'. Must be one of: {', '.join(SUBCOMMANDS)}"]

        values = config.values
        errors = validate_keys(values, valid_keys(config.subcommand))
        errors += validate_choice(values, "time.kind", [k.value for k in TimeKind])
        errors += validate_choice(values, "space.kind", [k.value for k in SpaceKind])
        errors += validate_choice(values, "params.increments", [k.value for k in IncrementLaw])
        errors += validate_choice(values, "params.problem", ["E", "M"])
        errors += validate_choice(values, "params.theorem", [t.value for t in TheoremId])
        errors += validate_grid(values)
        errors += validate_positive(values, ["theta", "params.t", "params.beta", "params.n_mc", "params.nx",
                                             "params.half_width", "params.ns", "params.tol", "params.realizations",
                                             "params.radii", "params.lambdas", "params.epsilons", "params.m",
                                             "params.initial", "params.picard_beta", "workers"])
        errors += validate_increasing(values, "params.radii")
        return errors
