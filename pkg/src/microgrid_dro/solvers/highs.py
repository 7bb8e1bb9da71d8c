"""HiGHS: scipy's ``linprog`` for LPs (duals available), highspy for MIPs (warm starts)."""
from __future__ import annotations

import time

import highspy
import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .base import (
    ERROR,
    FEASIBLE_LIMIT,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    Backend,
    ProblemSpec,
    SolveResult,
    register_backend,
)

_LP_STATUS = {0: OPTIMAL, 1: FEASIBLE_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED, 4: ERROR}


@register_backend("highs")
class HighsBackend(Backend):
    feasibility_tol = 1e-9

    def solve(self, problem: ProblemSpec, want_duals: bool = False) -> SolveResult:
        start = time.perf_counter()
        if problem.is_mip:
            res = self._solve_mip(problem)
        else:
            res = self._solve_lp(problem)
        res.wall_time = time.perf_counter() - start
        res.backend = self.name
        return res

    def _solve_lp(self, p: ProblemSpec) -> SolveResult:
        A = p.A.tocsr()
        is_l = p.senses == "L"
        is_g = p.senses == "G"
        is_e = p.senses == "E"
        ineq = is_l | is_g
        sign = np.where(is_g, -1.0, 1.0)
        A_ub = sp.diags(sign[ineq]) @ A[ineq] if ineq.any() else None
        b_ub = (sign * p.rhs)[ineq] if ineq.any() else None
        A_eq = A[is_e] if is_e.any() else None
        b_eq = p.rhs[is_e] if is_e.any() else None
        bounds = np.column_stack([p.lb, p.ub])
        options = {
            "presolve": True,
            "primal_feasibility_tolerance": self.feasibility_tol,
            "dual_feasibility_tolerance": self.feasibility_tol,
        }
        if p.time_limit:
            options["time_limit"] = p.time_limit
        r = linprog(p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs", options=options)
        status = _LP_STATUS.get(r.status, ERROR)
        if status != OPTIMAL:
            return SolveResult(status=status, message=r.message)
        duals = np.zeros(p.n_rows)
        if ineq.any():
            duals[ineq] = sign[ineq] * r.ineqlin.marginals
        if is_e.any():
            duals[is_e] = r.eqlin.marginals
        rc = np.asarray(r.lower.marginals) + np.asarray(r.upper.marginals)
        return SolveResult(
            status=OPTIMAL,
            x=np.asarray(r.x),
            objective=float(r.fun) + p.offset,
            row_duals=duals,
            reduced_costs=rc,
            gap=0.0,
            bound=float(r.fun) + p.offset,
            message=r.message,
        )

    def _solve_mip(self, p: ProblemSpec) -> SolveResult:
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("mip_rel_gap", float(p.mip_gap))
        h.setOptionValue("random_seed", 0)
        if p.time_limit:
            h.setOptionValue("time_limit", float(p.time_limit))
        A = p.A.tocsr()
        inf = highspy.kHighsInf
        lp = highspy.HighsLp()
        lp.num_col_ = p.n_cols
        lp.num_row_ = p.n_rows
        lp.col_cost_ = p.c
        lp.col_lower_ = np.where(np.isfinite(p.lb), p.lb, -inf)
        lp.col_upper_ = np.where(np.isfinite(p.ub), p.ub, inf)
        lp.row_lower_ = np.where(p.senses == "L", -inf, p.rhs)
        lp.row_upper_ = np.where(p.senses == "G", inf, p.rhs)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
        lp.a_matrix_.num_col_ = p.n_cols
        lp.a_matrix_.num_row_ = p.n_rows
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if flag else highspy.HighsVarType.kContinuous for flag in p.integrality
        ]
        h.passModel(lp)
        if p.warm_start is not None:
            sol = highspy.HighsSolution()
            sol.col_value = list(np.asarray(p.warm_start, dtype=float))
            sol.value_valid = True
            h.setSolution(sol)
        h.run()
        ms = h.getModelStatus()
        info = h.getInfo()
        has_x = info.primal_solution_status == 2  # kSolutionStatusFeasible
        M = highspy.HighsModelStatus
        if ms == M.kOptimal:
            status = OPTIMAL
        elif ms in (M.kInfeasible,):
            return SolveResult(status=INFEASIBLE, message=h.modelStatusToString(ms))
        elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
            return SolveResult(status=UNBOUNDED, message=h.modelStatusToString(ms))
        elif has_x:
            status = FEASIBLE_LIMIT
        else:
            return SolveResult(status=ERROR, message=h.modelStatusToString(ms))
        x = np.asarray(h.getSolution().col_value, dtype=float)
        return SolveResult(
            status=status,
            x=x,
            objective=float(p.c @ x) + p.offset,
            gap=float(max(info.mip_gap, 0.0)) if np.isfinite(info.mip_gap) else np.inf,
            bound=float(info.mip_dual_bound) + p.offset if np.isfinite(info.mip_dual_bound) else -np.inf,
            message=h.modelStatusToString(ms),
        )
