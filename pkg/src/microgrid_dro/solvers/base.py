"""Backend-neutral problem and result containers plus independent residual checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_LIMIT = "feasible-limit"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ERROR = "error"

SENSES = ("L", "E", "G")


class SolverError(RuntimeError):
    """Raised when a backend fails or is unavailable."""


class BackendUnavailable(SolverError):
    pass


@dataclass
class ProblemSpec:
    """A linear program or MILP in the form ``min c'x + offset`` s.t. ``A x (sense) rhs``.

    ``senses`` holds one of ``"L"`` (<=), ``"E"`` (=), ``"G"`` (>=) per row.
    """

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integrality: np.ndarray
    offset: float = 0.0
    row_names: Optional[list[str]] = None
    col_names: Optional[list[str]] = None
    warm_start: Optional[np.ndarray] = None
    time_limit: Optional[float] = None
    mip_gap: float = 1e-6

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A = sp.csr_matrix(self.A, shape=(self.A.shape[0], n)) if self.A is not None else sp.csr_matrix((0, n))
        m = self.A.shape[0]
        self.senses = np.asarray(self.senses, dtype="<U1").reshape(m)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(m)
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        self.integrality = np.broadcast_to(np.asarray(self.integrality, dtype=bool), (n,)).copy()
        self.check()

    @property
    def n_cols(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def is_mip(self) -> bool:
        return bool(self.integrality.any())

    def check(self) -> None:
        if self.A.shape[1] != self.n_cols:
            raise ValueError(f"constraint matrix has {self.A.shape[1]} columns, objective has {self.n_cols}")
        bad = set(np.unique(self.senses)) - set(SENSES)
        if bad:
            raise ValueError(f"unknown row senses {sorted(bad)}")
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise ValueError(f"column {j} has lb > ub")
        ints = self.integrality
        if np.any(~np.isfinite(self.lb[ints])) or np.any(~np.isfinite(self.ub[ints])):
            raise ValueError("integer columns need finite bounds")

    def row_label(self, i: int) -> str:
        return self.row_names[i] if self.row_names else f"r{i}"


@dataclass
class SolveResult:
    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    # d(objective)/d(rhs) per row and per column bound; LP only
    row_duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    gap: Optional[float] = None
    bound: Optional[float] = None  # proven lower bound on the optimum (MIP dual bound)
    wall_time: float = 0.0
    backend: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class ResidualReport:
    max_residual: float
    violated_rows: list[int] = field(default_factory=list)
    bound_violations: list[int] = field(default_factory=list)
    integrality_violation: float = 0.0
    objective_mismatch: float = 0.0
    duality_gap: Optional[float] = None

    @property
    def worst_row(self) -> Optional[int]:
        return self.violated_rows[0] if self.violated_rows else None


def row_residuals(problem: ProblemSpec, x: np.ndarray) -> np.ndarray:
    """Signed violation per row; positive means violated."""
    ax = problem.A @ x
    diff = ax - problem.rhs
    res = np.where(problem.senses == "L", diff, np.where(problem.senses == "G", -diff, np.abs(diff)))
    return res


def verify_solution(problem: ProblemSpec, result: SolveResult, tol: float = 1e-6) -> ResidualReport:
    """Recompute residuals, objective and (for LPs with duals) the duality gap from scratch."""
    if result.x is None:
        raise ValueError("result carries no primal values")
    x = np.asarray(result.x, dtype=float)
    res = row_residuals(problem, x) if problem.n_rows else np.zeros(0)
    bound_res = np.maximum(problem.lb - x, x - problem.ub)
    worst = max(float(res.max(initial=0.0)), float(bound_res.max(initial=0.0)))
    order = np.argsort(-res)
    violated = [int(i) for i in order if res[i] > tol]
    bounds_bad = [int(j) for j in np.flatnonzero(bound_res > tol)]
    xi = x[problem.integrality]
    int_dev = float(np.abs(xi - np.round(xi)).max(initial=0.0))
    obj = float(problem.c @ x) + problem.offset
    mismatch = abs(obj - result.objective) if result.objective is not None else 0.0

    gap = None
    if result.row_duals is not None and result.reduced_costs is not None:
        gap = abs(obj - dual_objective(problem, result.row_duals, result.reduced_costs))
    return ResidualReport(
        max_residual=max(worst, 0.0),
        violated_rows=violated,
        bound_violations=bounds_bad,
        integrality_violation=int_dev,
        objective_mismatch=mismatch,
        duality_gap=gap,
    )


def dual_objective(problem: ProblemSpec, row_duals: np.ndarray, reduced_costs: np.ndarray) -> float:
    """Dual objective from sensitivities: sum of rhs*y plus bound contributions of reduced costs."""
    val = float(problem.rhs @ row_duals) + problem.offset
    rc = np.asarray(reduced_costs)
    at_lb = rc > 0
    at_ub = rc < 0
    val += float(rc[at_lb] @ problem.lb[at_lb]) + float(rc[at_ub] @ problem.ub[at_ub])
    return val


_BACKENDS: dict[str, Callable[[], "Backend"]] = {}
DEFAULT_BACKEND = "highs"


class Backend:
    name = "abstract"

    def solve(self, problem: ProblemSpec, want_duals: bool = False) -> SolveResult:
        raise NotImplementedError


def register_backend(name: str):
    def deco(cls):
        _BACKENDS[name] = cls
        cls.name = name
        return cls

    return deco


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: Optional[str] = None) -> Backend:
    """Return a fresh backend context; contexts are never shared between solves."""
    name = name or DEFAULT_BACKEND
    try:
        factory = _BACKENDS[name]
    except KeyError:
        raise BackendUnavailable(f"unknown backend {name!r}; available: {available_backends()}") from None
    return factory()


def solve(problem: ProblemSpec, backend: Optional[str] = None, want_duals: bool = False) -> SolveResult:
    return get_backend(backend).solve(problem, want_duals=want_duals)
