"""Second-stage evaluation Q(x, u): the operation LP with topology and line survival fixed."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ..netdata import CaseData
from ..solvers import OPTIMAL, SolverError, solve, verify_solution
from .decisions import FirstStageDecision, ScenarioRealization
from .index import VariableIndex, index_variables
from .second_stage import build_second_stage
from .systems import AffineSystem


class DispatchError(SolverError):
    pass


@dataclass(frozen=True)
class OperationModel:
    case: CaseData
    idx: VariableIndex
    system: AffineSystem


@lru_cache(maxsize=16)
def operation_model(case: CaseData) -> OperationModel:
    idx = index_variables(case)
    return OperationModel(case, idx, build_second_stage(case, idx))


@dataclass(frozen=True, eq=False)
class DispatchResult:
    """Optimal operation for one (x, u). Powers in kW/kvar, voltages in p.u.

    ``objective`` is the weighted shedding sum over steps in $/h
    (multiply by ``step_hours`` for VoLL in $).
    """

    PG: np.ndarray
    QG: np.ndarray
    S_p: np.ndarray
    S_q: np.ndarray
    PF: np.ndarray
    QF: np.ndarray
    V: np.ndarray
    delta: np.ndarray
    shed: np.ndarray
    objective: float
    lp_objective: float
    step_objective: np.ndarray
    max_residual: float
    step_hours: float

    @property
    def voll(self) -> float:
        return self.objective * self.step_hours

    @property
    def voll_per_step(self) -> np.ndarray:
        return self.step_objective * self.step_hours


def evaluate_q(
    x: FirstStageDecision,
    u: ScenarioRealization,
    case: CaseData,
    backend: Optional[str] = None,
    context: str = "",
) -> DispatchResult:
    """Minimum weighted load shedding for fixed boundaries ``x`` and survival ``u``."""
    model = operation_model(case)
    idx, sysm = model.idx, model.system
    xv = x.to_vector(idx)
    uv = np.zeros(idx.nu)
    uv[idx.local("u")] = u.u
    problem = sysm.to_problem(xv, uv)
    res = solve(problem, backend=backend)
    if res.status != OPTIMAL:
        where = f" ({context})" if context else ""
        raise DispatchError(f"operation LP returned {res.status}{where}: {res.message}")
    report = verify_solution(problem, res)
    return _unpack(case, idx, sysm, res.x, report.max_residual, res.objective * sysm.obj_scale)


def _unpack(
    case: CaseData, idx: VariableIndex, sysm: AffineSystem, y: np.ndarray, residual: float, lp_obj: float
) -> DispatchResult:
    sb = case.s_base_kva
    get = lambda kind: y[idx.local(kind)]  # noqa: E731
    S_p = get("S_p") * sb
    demand = np.array([n.demand_p for n in case.nodes], dtype=float).reshape(len(case.nodes), case.T)
    weights = np.array([n.weight for n in case.nodes])
    shed = demand - S_p
    step_obj = (weights[:, None] * shed).sum(axis=0)
    return DispatchResult(
        PG=get("PG") * sb,
        QG=get("QG") * sb,
        S_p=S_p,
        S_q=get("S_q") * sb,
        PF=get("PF") * sb,
        QF=get("QF") * sb,
        V=get("V").copy(),
        delta=get("delta").copy(),
        shed=shed,
        objective=float(step_obj.sum()),
        lp_objective=float(lp_obj),
        step_objective=step_obj,
        max_residual=residual,
        step_hours=case.step_hours,
    )
