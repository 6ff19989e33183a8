from .run_config import RunConfig
from .run_pipeline import RunPipeline
from .state_manager import RunStateManager, StageStatus, state_manager

__all__ = ["RunConfig", "RunPipeline", "RunStateManager", "StageStatus", "state_manager"]
