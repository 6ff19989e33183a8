"""
Run pipeline

Orchestrates one lab run as a LangGraph workflow:

    intake -> admit -> (execute | END) -> emit -> complete -> END

The admit node ends the workflow when the covariance spec is inadmissible.
"""

import logging
from typing import Any, Dict, Optional

from langgraph.graph import END, StateGraph

from ..stages.stage_01_intake import IntakeStage
from ..stages.stage_02_admit import AdmitStage
from ..stages.stage_03_execute import ExecuteStage
from ..stages.stage_04_emit import EmitStage
from ..stages.stage_05_complete import CompleteStage
from .run_config import RunConfig
from .state_manager import RunState, RunStateManager, StageStatus, state_manager

logger = logging.getLogger(__name__)


class RunPipeline:
    """
    Drives a RunConfig through the five stages.

    - Each node is one stage with its own execution log entry
    - State is carried forward by the RunStateManager
    - The admissibility decision is the only branch
    """

    def __init__(self, manager: Optional[RunStateManager] = None):
        self.state_manager = manager or state_manager
        self.stages = self._initialize_stages()
        self.workflow = self._build_langgraph_workflow()
        logger.debug(f"Run pipeline initialized with {len(self.stages)} stages")

    def _initialize_stages(self) -> Dict[str, Any]:
        return {
            "INTAKE": IntakeStage(self.state_manager),
            "ADMIT": AdmitStage(self.state_manager),
            "EXECUTE": ExecuteStage(self.state_manager),
            "EMIT": EmitStage(self.state_manager),
            "COMPLETE": CompleteStage(self.state_manager),
        }

    def _build_langgraph_workflow(self):
        workflow = StateGraph(RunState)

        workflow.add_node("intake", self._execute_intake_stage)
        workflow.add_node("admit", self._execute_admit_stage)
        workflow.add_node("execute", self._execute_execute_stage)
        workflow.add_node("emit", self._execute_emit_stage)
        workflow.add_node("complete", self._execute_complete_stage)

        workflow.add_edge("intake", "admit")

        # Inadmissible specs end the workflow before any numerical work
        workflow.add_conditional_edges(
            "admit",
            self._decide_next_stage,
            {
                "execute": "execute",
                "reject": END,
            },
        )

        workflow.add_edge("execute", "emit")
        workflow.add_edge("emit", "complete")
        workflow.add_edge("complete", END)

        workflow.set_entry_point("intake")
        return workflow.compile()

    async def process_run(self, config: RunConfig) -> RunState:
        """
        Main entry point: run the workflow for one config.

        Returns:
            Final RunState
        """
        logger.info(f"Starting {config.subcommand} run (seed {config.seed}) -> {config.run_dir}")
        try:
            result = await self.workflow.ainvoke({"config": config})
            completed = len([log for log in result.get("execution_log", [])
                             if log.status == StageStatus.COMPLETED])
            logger.info(f"Run finished: exit code {result.get('exit_code')}, {completed} stages completed")
            # Final state goes to the caller; drop the history
            self.state_manager.cleanup_run(result["run_id"])
            return result
        except Exception as e:
            logger.error(f"Run failed: {str(e)}")
            raise

    async def _execute_intake_stage(self, state: RunState) -> RunState:
        return await self.stages["INTAKE"].execute({"config": state["config"]})

    async def _execute_admit_stage(self, state: RunState) -> RunState:
        return await self.stages["ADMIT"].execute(state["run_id"])

    async def _execute_execute_stage(self, state: RunState) -> RunState:
        return await self.stages["EXECUTE"].execute(state["run_id"])

    async def _execute_emit_stage(self, state: RunState) -> RunState:
        return await self.stages["EMIT"].execute(state["run_id"])

    async def _execute_complete_stage(self, state: RunState) -> RunState:
        return await self.stages["COMPLETE"].execute(state["run_id"])

    def _decide_next_stage(self, state: RunState) -> str:
        if state.get("admissible"):
            return "execute"
        logger.info("Routing to END: covariance spec is inadmissible")
        return "reject"

