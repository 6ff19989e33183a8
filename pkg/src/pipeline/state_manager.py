"""
State manager for lab runs

This module handles state persistence across the pipeline stages.
State flows like a pipeline: each stage reads from it and writes its own
fields back.
"""

import uuid
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, TypedDict

from pydantic import BaseModel, ConfigDict

from .run_config import RunConfig


class StageStatus(str, Enum):
    """Status of the stage execution"""
    COMPLETED = "completed"
    FAILED = "failed"


class ExecutionLog(BaseModel):
    """Log entry for stage execution"""
    stage_id: int
    stage_name: str
    timestamp: datetime
    status: StageStatus
    operations: List[str] = []
    duration_ms: Optional[int] = None
    error_message: Optional[str] = None
    output: Optional[Dict[str, Any]] = None


class ResultTable(BaseModel):
    """One CSV worth of results plus how to plot it"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    header: List[str]
    rows: List[List[Any]]
    title: str = ""
    plot: Optional[Tuple[str, str, str]] = None  # x column, y column, logscale axes


class RunState(TypedDict):
    """
    Complete state that flows through the stages.
    """
    # INTAKE
    config: RunConfig
    run_id: str
    subcommand: str

    # ADMIT
    classification: Optional[Dict[str, Any]]
    admissible: Optional[bool]

    # EXECUTE
    tables: Optional[List[ResultTable]]
    fields: Optional[Dict[str, Any]]
    summary: Optional[Dict[str, Any]]
    failures: int

    # EMIT
    artifacts: Optional[List[Dict[str, str]]]

    # COMPLETE
    exit_code: int
    final_payload: Optional[Dict[str, Any]]

    # Metadata (maintained throughout)
    current_stage: str
    execution_log: List[ExecutionLog]
    created_at: datetime
    updated_at: datetime
    errors: List[str]


class RunStateManager:
    """
    Keeps the state history of every run and the execution log of its stages.
    """

    def __init__(self):
        self._state_history: Dict[str, List[RunState]] = {}

    def create_initial_state(self, config: RunConfig) -> RunState:
        """Create the initial state; called by INTAKE"""
        run_id = str(uuid.uuid4())
        current_time = datetime.now()

        initial_state = RunState(
            config=config,
            run_id=run_id,
            subcommand=config.subcommand,
            classification=None,
            admissible=None,
            tables=None,
            fields=None,
            summary=None,
            failures=0,
            artifacts=None,
            exit_code=0,
            final_payload=None,
            current_stage="INTAKE",
            execution_log=[],
            created_at=current_time,
            updated_at=current_time,
            errors=[],
        )

        self._state_history[run_id] = [initial_state]
        return initial_state

    def update_state(self, run_id: str, updates: Dict[str, Any], stage_name: str) -> RunState:
        """
        Update the state with new information from a stage

        Args:
            run_id: Unique run identifier
            updates: Dictionary of fields to update
            stage_name: Name of stage making the update

        Returns:
            Updated state
        """
        if run_id not in self._state_history:
            raise ValueError(f"Run ID {run_id} not found")

        current_state = self._state_history[run_id][-1].copy()

        for key, value in updates.items():
            if key in current_state:
                current_state[key] = value
            else:
                # Unknown keys are recorded, not fatal
                current_state["errors"] = current_state["errors"] + [
                    f"Unknown state key: {key} from stage {stage_name}"]

        current_state["current_stage"] = stage_name
        current_state["updated_at"] = datetime.now()

        self._state_history[run_id].append(current_state)
        return current_state

    def get_current_state(self, run_id: str) -> RunState:
        if run_id not in self._state_history:
            raise ValueError(f"Run ID {run_id} not found")
        return self._state_history[run_id][-1]

    def log_stage_execution(
            self,
            run_id: str,
            stage_id: int,
            stage_name: str,
            status: StageStatus,
            operations: Optional[List[str]] = None,
            duration_ms: Optional[float] = None,
            error_message: Optional[str] = None,
            output: Optional[Dict[str, Any]] = None
    ) -> None:
        """Append an ExecutionLog entry to the current state of the run"""
        if run_id not in self._state_history:
            raise ValueError(f"Run ID {run_id} not found")

        log_entry = ExecutionLog(
            stage_id=stage_id,
            stage_name=stage_name,
            timestamp=datetime.now(),
            status=status,
            operations=operations or [],
            duration_ms=None if duration_ms is None else int(duration_ms),
            error_message=error_message,
            output=output,
        )

        current_state = self._state_history[run_id][-1]
        current_state["execution_log"].append(log_entry)

        if error_message:
            current_state["errors"].append(f"{stage_name}: {error_message}")

    def cleanup_run(self, run_id: str) -> None:
        """Drop the history of a finished run"""
        self._state_history.pop(run_id, None)


# Global state manager instance
state_manager = RunStateManager()
