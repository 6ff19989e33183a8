"""
Stage 04: EMIT
Write result tables, plot scripts and binary fields into the run directory
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List

from ..pipeline.state_manager import RunState, RunStateManager, StageStatus
from ..utils.io import sha256_of, write_csv, write_field_binary, write_gnuplot_script

logger = logging.getLogger(__name__)


def artifact_entry(path: Path, run_dir: Path, kind: str) -> Dict[str, str]:
    return {"path": str(path.relative_to(run_dir)), "kind": kind, "sha256": sha256_of(path)}


class EmitStage:
    """
    Stage 04: EMIT

    Responsibilities:
    - One CSV per result table (17 significant digits)
    - One gnuplot script per plottable table
    - Binary dumps of requested fields
    """

    def __init__(self, state_manager: RunStateManager):
        self.state_manager = state_manager
        self.stage_id = 4
        self.stage_name = "EMIT"

    async def execute(self, run_id: str) -> RunState:
        start_time = datetime.now()

        try:
            logger.info(f"Starting {self.stage_name} stage")
            current_state = self.state_manager.get_current_state(run_id)
            run_dir = current_state["config"].run_dir
            run_dir.mkdir(parents=True, exist_ok=True)

            artifacts: List[Dict[str, str]] = []
            for table in current_state["tables"] or []:
                csv_path = write_csv(run_dir / f"{table.name}.csv", table.header, table.rows)
                artifacts.append(artifact_entry(csv_path, run_dir, "csv"))
                if table.plot is not None:
                    x_col, y_col, logscale = table.plot
                    gp_path = write_gnuplot_script(run_dir / f"{table.name}.gp", csv_path.name, x_col, y_col,
                                                   table.header, table.title, logscale)
                    artifacts.append(artifact_entry(gp_path, run_dir, "gnuplot"))

            for name, values in sorted((current_state["fields"] or {}).items()):
                bin_path = write_field_binary(run_dir / f"{name}.bin", values)
                artifacts.append(artifact_entry(bin_path, run_dir, "field"))

            execution_time = (datetime.now() - start_time).total_seconds() * 1000
            self.state_manager.log_stage_execution(
                run_id=run_id,
                stage_id=self.stage_id,
                stage_name=self.stage_name,
                status=StageStatus.COMPLETED,
                operations=["write_csv", "write_gnuplot_script", "write_field_binary"],
                duration_ms=execution_time,
                output={"artifacts": [a["path"] for a in artifacts]},
            )
            logger.info(f"{self.stage_name} completed: {len(artifacts)} artifacts in {run_dir}")

            return self.state_manager.update_state(
                run_id=run_id,
                updates={"artifacts": artifacts},
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
