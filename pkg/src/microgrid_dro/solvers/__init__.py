from .base import (
    DEFAULT_BACKEND,
    ERROR,
    FEASIBLE_LIMIT,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    BackendUnavailable,
    ProblemSpec,
    ResidualReport,
    SolveResult,
    SolverError,
    available_backends,
    dual_objective,
    get_backend,
    solve,
    verify_solution,
)
from . import highs as _highs  # noqa: F401  (registers backend)
from . import glpk as _glpk  # noqa: F401
from .lpformat import write_lp

__all__ = [
    "DEFAULT_BACKEND",
    "ERROR",
    "FEASIBLE_LIMIT",
    "INFEASIBLE",
    "OPTIMAL",
    "UNBOUNDED",
    "BackendUnavailable",
    "ProblemSpec",
    "ResidualReport",
    "SolveResult",
    "SolverError",
    "available_backends",
    "dual_objective",
    "get_backend",
    "solve",
    "verify_solution",
    "write_lp",
]
