from .decisions import FirstStageDecision, NotRadialError, ScenarioRealization
from .dispatch import DispatchError, DispatchResult, evaluate_q, operation_model
from .first_stage import build_first_stage
from .index import VariableIndex, expected_counts, index_variables
from .radiality import RadialityReport, check_all_steps, check_radiality
from .second_stage import build_second_stage
from .systems import AffineSystem, LinearSystem

__all__ = [
    "AffineSystem",
    "DispatchError",
    "DispatchResult",
    "FirstStageDecision",
    "LinearSystem",
    "NotRadialError",
    "RadialityReport",
    "ScenarioRealization",
    "VariableIndex",
    "build_first_stage",
    "build_second_stage",
    "check_all_steps",
    "check_radiality",
    "evaluate_q",
    "expected_counts",
    "index_variables",
    "operation_model",
]
