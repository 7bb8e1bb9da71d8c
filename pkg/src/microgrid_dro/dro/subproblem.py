"""Worst-case trajectory search: max over u in D of Q(x, u) + u . beta.

The operation LP ``min d y + d0 s.t. F y (<=,=) b - E x - H u`` is replaced by
its dual, ``max -lam.r - mu.r_eq`` with ``F_I' lam + F_E' mu = -d``. The
uncertainty enters only through ``lam' H u``; each product of a binary
``u`` with a bounded multiplier ``lam`` is linearized exactly:

    z <= L u,   z <= lam,   z >= lam - L (1 - u),   z >= 0.

After the MILP, ``u`` is fixed at its rounded optimum and the dual LP is
re-solved, so the returned value and multipliers are exact for that ``u``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..model import FirstStageDecision, ScenarioRealization, operation_model
from ..netdata import CaseData
from ..solvers import FEASIBLE_LIMIT, OPTIMAL, ProblemSpec, SolverError, get_backend

logger = logging.getLogger(__name__)

DUAL_BOUND_FACTOR = 10.0
SLACK_TOL = 1e-6


class DualBoundError(SolverError):
    """A linearized multiplier sits at its bound, so the envelope may cut off the true optimum."""


@dataclass
class SubproblemResult:
    scenario: ScenarioRealization
    value: float  # internal units: Q(x,u) + u.beta
    q_value: float  # internal units
    milp_value: float
    mccormick_error: float
    bound_usage: float  # max |net multiplier| / bound on failed lines
    dual_bound: float
    wall_time: float
    # a valid upper bound on the max; above ``value`` only when a limit cut the search short
    value_bound: float = float("nan")


@dataclass(frozen=True)
class _Bilinear:
    rows: np.ndarray  # affine-system row of each product
    ucols: np.ndarray  # local u column of each product
    coefs: np.ndarray  # H entry
    pair_of: np.ndarray  # index of the opposite-signed partner row, -1 when none


@lru_cache(maxsize=16)
def _bilinear_terms(case: CaseData) -> _Bilinear:
    aff = operation_model(case).system
    H = aff.H.tocoo()
    if np.any(np.bincount(H.row, minlength=aff.n_rows) > 1):
        raise ValueError("each uncertain row may carry a single uncertainty term")
    if np.any(aff.senses[H.row] != "L"):
        raise ValueError("uncertainty may only enter inequality rows")
    order = np.argsort(H.row)
    rows, ucols, coefs = H.row[order], H.col[order], H.data[order]
    F = aff.F.tocsr()
    key = {}
    pair = np.full(rows.size, -1)
    for k, r in enumerate(rows):
        lo, hi = F.indptr[r], F.indptr[r + 1]
        if hi - lo != 1:
            continue
        ycol, sign = int(F.indices[lo]), float(np.sign(F.data[lo]))
        other = key.get((int(ucols[k]), ycol, -sign))
        if other is not None:
            pair[k], pair[other] = other, k
        key[(int(ucols[k]), ycol, sign)] = k
    return _Bilinear(rows, ucols, coefs, pair)


def _no_risk(case: CaseData) -> np.ndarray:
    return np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T) <= 0.0


def default_dual_bound(case: CaseData) -> float:
    """Bound on linearized multipliers, in internal objective units per p.u. of flow.

    A unit of active flow capacity serves at most one unit of load (worth at
    most the largest weight, which is 1 internally); a unit of reactive
    capacity serves at most p/q units of active load. The factor leaves room
    for voltage coupling and is verified after every solve.
    """
    ratios = [p / q for n in case.nodes for p, q in zip(n.demand_p, n.demand_q) if q > 0 and p > 0]
    return DUAL_BOUND_FACTOR * max([1.0] + ratios)


def _build(case, x, beta, dual_bound, fixed_u=None, mip_gap=1e-6, time_limit=None):
    model = operation_model(case)
    aff, idx = model.system, model.idx
    bil = _bilinear_terms(case)
    E, T = len(case.edges), case.T
    nu = idx.nu
    ineq = np.flatnonzero(aff.senses == "L")
    eq = np.flatnonzero(aff.senses == "E")
    n_l, n_m, n_z = ineq.size, eq.size, bil.rows.size
    # columns: u | lam (ineq rows) | mu (eq rows) | z
    c_u, c_l, c_m, c_z = 0, nu, nu + n_l, nu + n_l + n_m
    n_cols = c_z + n_z

    xv = x.to_vector(idx)
    r0 = aff.b - aff.E @ xv
    F = aff.F.tocsc()

    # objective (maximize): -lam.r0_I - mu.r0_E + sum H z + beta.u + d0 ; minimize its negative
    obj = np.zeros(n_cols)
    obj[c_l:c_m] = r0[ineq]
    obj[c_m:c_z] = r0[eq]
    obj[c_z:] = -bil.coefs
    u_loc = idx.local("u")
    obj[c_u + u_loc.ravel()] -= np.asarray(beta, dtype=float).ravel()

    rows, rhs, senses = [], [], []
    # dual feasibility: F_I' lam + F_E' mu = -d
    FI = F[ineq, :].T.tocsr()
    FE = F[eq, :].T.tocsr()
    ny = F.shape[1]
    rows.append(sp.hstack([sp.csr_matrix((ny, nu)), FI, FE, sp.csr_matrix((ny, n_z))]))
    rhs.append(-aff.d)
    senses.append(np.full(ny, "E"))

    lam_pos = np.full(aff.n_rows, -1)
    lam_pos[ineq] = np.arange(n_l)
    lam_cols = c_l + lam_pos[bil.rows]
    z_cols = c_z + np.arange(n_z)
    uc = c_u + bil.ucols
    k = np.arange(n_z)

    def block(pairs, n):
        rr, cc, vv = [], [], []
        for cols, vals in pairs:
            rr.append(k)
            cc.append(cols)
            vv.append(np.broadcast_to(vals, (n,)))
        return sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))), shape=(n, n_cols))

    L = dual_bound
    # z - L u <= 0 ; z - lam <= 0 ; -z + lam + L u <= L ; z >= 0 via bounds
    rows.append(block([(z_cols, 1.0), (uc, -L)], n_z)); rhs.append(np.zeros(n_z)); senses.append(np.full(n_z, "L"))
    rows.append(block([(z_cols, 1.0), (lam_cols, -1.0)], n_z)); rhs.append(np.zeros(n_z)); senses.append(np.full(n_z, "L"))
    rows.append(block([(z_cols, -1.0), (lam_cols, 1.0), (uc, L)], n_z)); rhs.append(np.full(n_z, L)); senses.append(np.full(n_z, "L"))

    # support: u[e,t] <= u[e,t-1] ; sum_e u[e,t] >= E - k
    sup_r, sup_c, sup_v, sup_rhs, sup_s = [], [], [], [], []
    r = 0
    for e in range(E):
        for t in range(1, T):
            sup_r += [r, r]
            sup_c += [c_u + u_loc[e, t], c_u + u_loc[e, t - 1]]
            sup_v += [1.0, -1.0]
            sup_rhs.append(0.0)
            sup_s.append("L")
            r += 1
    for t in range(T):
        for e in range(E):
            sup_r.append(r)
            sup_c.append(c_u + u_loc[e, t])
            sup_v.append(1.0)
        sup_rhs.append(float(E - case.k))
        sup_s.append("G")
        r += 1
    rows.append(sp.csr_matrix((sup_v, (sup_r, sup_c)), shape=(r, n_cols)))
    rhs.append(np.array(sup_rhs))
    senses.append(np.array(sup_s))

    lb = np.zeros(n_cols)
    ub = np.full(n_cols, np.inf)
    ub[c_u:c_l] = 1.0
    lb[c_m:c_z] = -np.inf
    ub[lam_cols] = L
    ub[z_cols] = L
    # a line that may not fail by step t carries no probability mass on failing there
    frozen = u_loc[_no_risk(case)]
    lb[c_u + frozen] = 1.0
    integ = np.zeros(n_cols, dtype=bool)
    if fixed_u is None:
        integ[c_u:c_l] = True
    else:
        uu = np.zeros(nu)
        uu[u_loc] = fixed_u
        lb[c_u:c_l] = ub[c_u:c_l] = uu

    problem = ProblemSpec(
        c=obj, A=sp.vstack(rows, format="csr"), senses=np.concatenate(senses), rhs=np.concatenate(rhs),
        lb=lb, ub=ub, integrality=integ, offset=-aff.d0, mip_gap=mip_gap, time_limit=time_limit,
    )
    layout = dict(c_u=c_u, c_l=c_l, c_m=c_m, c_z=c_z, lam_cols=lam_cols, z_cols=z_cols, uc=uc)
    return problem, layout, bil


def _lexicographic(problem: ProblemSpec, lay: dict, optimum: float) -> ProblemSpec:
    """Same LP restricted to its optimal face, minimizing the linearized multipliers."""
    c = np.zeros(problem.n_cols)
    c[lay["lam_cols"]] = 1.0
    slack = 1e-9 * (1.0 + abs(optimum))
    A = sp.vstack([problem.A, sp.csr_matrix(problem.c.reshape(1, -1))], format="csr")
    return ProblemSpec(
        c=c, A=A, senses=np.append(problem.senses, "L"), rhs=np.append(problem.rhs, optimum - problem.offset + slack),
        lb=problem.lb, ub=problem.ub, integrality=problem.integrality,
    )


def solve_subproblem(
    x: FirstStageDecision,
    beta: np.ndarray,
    case: CaseData,
    backend: Optional[str] = None,
    dual_bound: Optional[float] = None,
    mip_gap: float = 1e-6,
    time_limit: Optional[float] = None,
) -> SubproblemResult:
    """Return the worst trajectory for (x, beta) and ``max_u Q(x,u) + u.beta`` in internal units."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < -1e-12):
        raise ValueError("moment prices must be non-negative")
    L = dual_bound if dual_bound is not None else default_dual_bound(case)
    idx = operation_model(case).idx
    u_loc = idx.local("u")

    problem, lay, bil = _build(case, x, beta, L, mip_gap=mip_gap, time_limit=time_limit)
    res = get_backend(backend).solve(problem)
    if res.status not in (OPTIMAL, FEASIBLE_LIMIT):
        raise SolverError(f"subproblem solve failed: {res.status} {res.message}")
    wall = res.wall_time
    milp_value = -res.objective
    proven = res.status == OPTIMAL
    u_star = np.round(res.x[lay["c_u"] + u_loc]).astype(np.int8)

    polish, lay2, _ = _build(case, x, beta, L, fixed_u=u_star)
    pres = get_backend(backend).solve(polish)
    if pres.status != OPTIMAL:
        raise SolverError(f"subproblem polish failed: {pres.status} {pres.message}")
    wall += pres.wall_time
    value = -pres.objective

    # among optimal multipliers pick the smallest linearized ones: the bound is
    # slack iff some optimal dual solution stays strictly inside it
    lex = _lexicographic(polish, lay2, pres.objective)
    lres = get_backend(backend).solve(lex)
    if lres.status != OPTIMAL:
        raise SolverError(f"subproblem multiplier polish failed: {lres.status} {lres.message}")
    wall += lres.wall_time
    v = lres.x
    lam = v[lay2["lam_cols"]]
    z = v[lay2["z_cols"]]
    u_of = v[lay2["uc"]]
    mc_err = float(np.abs(z - u_of * lam).max(initial=0.0))

    # net multiplier per opposite-signed pair; only failed lines can carry nonzero net
    net = lam.copy()
    has_pair = bil.pair_of >= 0
    net[has_pair] = lam[has_pair] - lam[bil.pair_of[has_pair]]
    usage = float(np.abs(net).max(initial=0.0)) / L
    if usage > 1 - SLACK_TOL:
        raise DualBoundError(
            f"linearized multiplier reached its bound {L:.4g}; increase the dual bound (or beta_bound)"
        )
    q_value = value - float(np.sum(beta * u_star))
    logger.debug("subproblem: value %.6g (milp %.6g), %d failures", value, milp_value, int((1 - u_star).sum()))
    return SubproblemResult(
        scenario=ScenarioRealization(u_star),
        value=float(value),
        q_value=float(q_value),
        milp_value=float(milp_value),
        mccormick_error=mc_err,
        bound_usage=usage,
        dual_bound=L,
        wall_time=wall,
        value_bound=float(value) if proven else max(float(value), -float(res.bound)),
    )
