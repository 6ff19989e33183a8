"""
Stage 05: COMPLETE
Write the manifest and build the final payload
"""

import json
import logging
import platform
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy

from ..pipeline.run_config import RunConfig, load_lab_config
from ..pipeline.state_manager import RunState, RunStateManager, StageStatus

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def write_manifest(cfg: RunConfig, exit_code: int, artifacts: Optional[List[Dict[str, str]]] = None,
                   classification: Optional[Dict[str, Any]] = None,
                   errors: Optional[List[str]] = None) -> Path:
    """manifest.json with the resolved config, versions, artifacts and exit status"""
    lab = load_lab_config().get("lab", {})
    manifest = {
        "lab": lab.get("name", "pamlab"),
        "lab_version": lab.get("version", "0.1.0"),
        "format_version": cfg.format_version,
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "classification": classification,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "artifacts": artifacts or [],
        "exit_code": exit_code,
        "errors": errors or [],
    }
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.run_dir / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, default=str)
    return path


class CompleteStage:
    """
    Stage 05: COMPLETE

    Responsibilities:
    - Decide the exit status (selftest failures count as numerical failures)
    - Write manifest.json
    - Build the final payload returned to the CLI
    """

    def __init__(self, state_manager: RunStateManager):
        self.state_manager = state_manager
        self.stage_id = 5
        self.stage_name = "COMPLETE"

    async def execute(self, run_id: str) -> RunState:
        start_time = datetime.now()

        try:
            logger.info(f"Starting {self.stage_name} stage")
            current_state = self.state_manager.get_current_state(run_id)
            cfg = current_state["config"]
            exit_code = 3 if current_state["failures"] else 0

            manifest = write_manifest(cfg, exit_code, current_state["artifacts"],
                                      current_state["classification"], current_state["errors"])

            total_time = sum(log.duration_ms or 0 for log in current_state["execution_log"])
            final_payload = {
                "run_id": run_id,
                "subcommand": cfg.subcommand,
                "run_dir": str(cfg.run_dir),
                "manifest": str(manifest),
                "summary": current_state["summary"],
                "exit_code": exit_code,
                "processing_summary": {
                    "stages_executed": len(current_state["execution_log"]) + 1,
                    "total_time_ms": total_time,
                },
            }

            execution_time = (datetime.now() - start_time).total_seconds() * 1000
            self.state_manager.log_stage_execution(
                run_id=run_id,
                stage_id=self.stage_id,
                stage_name=self.stage_name,
                status=StageStatus.COMPLETED,
                operations=["write_manifest"],
                duration_ms=execution_time,
                output={"exit_code": exit_code},
            )
            logger.info(f"{self.stage_name} completed: exit code {exit_code}")

            return self.state_manager.update_state(
                run_id=run_id,
                updates={"final_payload": final_payload, "exit_code": exit_code},
                stage_name=self.stage_name,
            )

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
