"""GLPK through cvxopt. Column bounds are passed as extra inequality rows."""
from __future__ import annotations

import time

import numpy as np

from .base import (
    ERROR,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    Backend,
    BackendUnavailable,
    ProblemSpec,
    SolveResult,
    register_backend,
)


def _spmatrix(cvxopt, M, n):
    M = M.tocoo()
    return cvxopt.spmatrix(M.data.astype(float).tolist(), M.row.tolist(), M.col.tolist(), (M.shape[0], n))


@register_backend("glpk")
class GlpkBackend(Backend):
    def __init__(self):
        try:
            import cvxopt
            from cvxopt import glpk, solvers
        except ImportError as exc:  # pragma: no cover - depends on environment
            raise BackendUnavailable("cvxopt with GLPK is not installed") from exc
        self._cvxopt, self._glpk, self._solvers = cvxopt, glpk, solvers

    def solve(self, problem: ProblemSpec, want_duals: bool = False) -> SolveResult:
        import scipy.sparse as sp

        cvxopt = self._cvxopt
        start = time.perf_counter()
        p = problem
        n = p.n_cols
        A = p.A.tocsr()
        is_l, is_g, is_e = p.senses == "L", p.senses == "G", p.senses == "E"
        eye = sp.identity(n, format="csr")
        fin_ub = np.isfinite(p.ub)
        fin_lb = np.isfinite(p.lb)
        G_blocks = [A[is_l], -A[is_g], eye[fin_ub], -eye[fin_lb]]
        h = np.concatenate([p.rhs[is_l], -p.rhs[is_g], p.ub[fin_ub], -p.lb[fin_lb]])
        G = sp.vstack(G_blocks).tocsr()
        c = cvxopt.matrix(p.c.astype(float))
        Gm = _spmatrix(cvxopt, G, n)
        hm = cvxopt.matrix(h.astype(float))
        Aeq = A[is_e]
        Am = _spmatrix(cvxopt, Aeq, n) if Aeq.shape[0] else None
        bm = cvxopt.matrix(p.rhs[is_e].astype(float)) if Aeq.shape[0] else None

        self._glpk.options["msg_lev"] = "GLP_MSG_OFF"
        self._solvers.options["glpk"] = {"msg_lev": "GLP_MSG_OFF"}
        if p.is_mip:
            self._glpk.options["mip_gap"] = p.mip_gap
            ints = set(int(j) for j in np.flatnonzero(p.integrality))
            args = (c, Gm, hm) + ((Am, bm) if Am is not None else ())
            status, x = self._glpk.ilp(*args, I=ints)
            if status != "optimal":
                return self._fail(status, start)
            xv = np.array(x).ravel()
            return SolveResult(
                status=OPTIMAL,
                x=xv,
                objective=float(p.c @ xv) + p.offset,
                # GLPK stops once its relative gap is within mip_gap but does not report the bound
                gap=float(p.mip_gap),
                bound=float(p.c @ xv) + p.offset - p.mip_gap * abs(float(p.c @ xv) + p.offset),
                wall_time=time.perf_counter() - start,
                backend=self.name,
            )

        sol = self._solvers.lp(c, Gm, hm, Am, bm, solver="glpk")
        if sol["status"] != "optimal":
            return self._fail(sol["status"], start)
        xv = np.array(sol["x"]).ravel()
        z = np.array(sol["z"]).ravel()
        y = np.array(sol["y"]).ravel() if Am is not None else np.zeros(0)
        duals = np.zeros(p.n_rows)
        nl, ng, nu = int(is_l.sum()), int(is_g.sum()), int(fin_ub.sum())
        duals[is_l] = -z[:nl]
        duals[is_g] = z[nl : nl + ng]
        duals[is_e] = -y
        rc = np.zeros(n)
        rc[fin_ub] -= z[nl + ng : nl + ng + nu]
        rc[fin_lb] += z[nl + ng + nu :]
        return SolveResult(
            status=OPTIMAL,
            x=xv,
            objective=float(p.c @ xv) + p.offset,
            row_duals=duals,
            reduced_costs=rc,
            gap=0.0,
            bound=float(p.c @ xv) + p.offset,
            wall_time=time.perf_counter() - start,
            backend=self.name,
        )

    def _fail(self, status, start) -> SolveResult:
        mapped = {"primal infeasible": INFEASIBLE, "dual infeasible": UNBOUNDED, "infeasible": INFEASIBLE,
                  "unbounded": UNBOUNDED, "undefined": INFEASIBLE}.get(status, ERROR)
        return SolveResult(status=mapped, message=str(status), wall_time=time.perf_counter() - start,
                           backend=self.name)
