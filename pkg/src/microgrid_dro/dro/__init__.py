from .ccg import (
    CcgStallError,
    CcgState,
    IterationRecord,
    Solution,
    dumps_solution,
    load_solution,
    run_ccg,
    save_solution,
    solution_from_dict,
    solution_to_dict,
)
from .master import METHODS, MasterInfeasible, MasterResult, solve_master
from .oracle import (
    BruteForceOptimum,
    DualizedValue,
    WorstDistribution,
    brute_force_dro,
    brute_force_optimum,
    dualized_value,
    enumerate_first_stages,
    worst_distribution,
)
from .subproblem import DualBoundError, SubproblemResult, default_dual_bound, solve_subproblem
from .support import MAX_SUPPORT, AmbiguitySpec, SupportTooLarge, enumerate_support, support_size

__all__ = [
    "AmbiguitySpec",
    "BruteForceOptimum",
    "CcgStallError",
    "CcgState",
    "DualBoundError",
    "DualizedValue",
    "IterationRecord",
    "MAX_SUPPORT",
    "METHODS",
    "MasterInfeasible",
    "MasterResult",
    "Solution",
    "SubproblemResult",
    "SupportTooLarge",
    "WorstDistribution",
    "brute_force_dro",
    "brute_force_optimum",
    "default_dual_bound",
    "dualized_value",
    "dumps_solution",
    "enumerate_first_stages",
    "enumerate_support",
    "load_solution",
    "run_ccg",
    "save_solution",
    "solution_from_dict",
    "solution_to_dict",
    "solve_master",
    "solve_subproblem",
    "support_size",
    "worst_distribution",
]
