from .stage_01_intake import IntakeStage
from .stage_02_admit import AdmitStage
from .stage_03_execute import ExecuteStage
from .stage_04_emit import EmitStage
from .stage_05_complete import CompleteStage

__all__ = ["IntakeStage", "AdmitStage", "ExecuteStage", "EmitStage", "CompleteStage"]
