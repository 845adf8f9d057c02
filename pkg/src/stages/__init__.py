# Pipeline stages

from src.stages.estimates_stage import EstimatesStage
from src.stages.inequality_stage import InequalityStage
from src.stages.regularity_stage import RegularityStage
from src.stages.solve_stage import SolveStage
from src.stages.transform_stage import TransformStage
from src.stages.validation_stage import ValidationStage

__all__ = ["ValidationStage", "TransformStage", "SolveStage", "InequalityStage", "EstimatesStage",
           "RegularityStage"]
