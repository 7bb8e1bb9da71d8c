"""Master problem: first-stage topology, moment prices and one operation copy per cut scenario."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..model import FirstStageDecision, NotRadialError, ScenarioRealization, build_first_stage, index_variables, operation_model
from ..netdata import CaseData
from ..solvers import FEASIBLE_LIMIT, OPTIMAL, ProblemSpec, SolverError, get_backend, solve

logger = logging.getLogger(__name__)

METHODS = ("dr-dmf", "dr-smf", "ro-dmf")


class MasterInfeasible(SolverError):
    pass


@dataclass
class MasterResult:
    x: FirstStageDecision
    beta: np.ndarray  # internal units, shape (E, T)
    eta: float
    lower_bound: float  # internal units
    objective: float  # internal units (incumbent)
    gap: float
    wall_time: float
    sv_integrality: float
    proven: bool = True  # False when a limit stopped the solve short of its gap target


def check_method(method: str) -> str:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return method


@lru_cache(maxsize=16)
def _first_stage(case: CaseData, static: bool):
    idx = index_variables(case)
    return idx, build_first_stage(case, idx, static=static)


def moment_coefficients(case: CaseData) -> np.ndarray:
    """Coefficient ``mu_max - 1`` of each moment price in the outer objective."""
    return np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T) - 1.0


def beta_cap(case: CaseData) -> float:
    return case.beta_bound / operation_model(case).system.obj_scale


def spanning_forest(case: CaseData) -> FirstStageDecision:
    """A static start: breadth-first forest grown from all grid-forming buses at once.

    Lines without switches keep their initial status; a closed one pulls its
    far end into the same tree before any switchable line is considered.
    """
    pos = case.node_pos
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(len(case.nodes))}
    for e, edge in enumerate(case.edges):
        a, b = pos[edge.from_node], pos[edge.to_node]
        adj[a].append((b, e))
        adj[b].append((a, e))
    status = np.array([0 if e.switchable else int(e.initially_closed) for e in case.edges])
    fixed = [not e.switchable for e in case.edges]
    seen: set[int] = set()

    def absorb(i: int, out: list[int]) -> None:
        # i and everything hanging off it by fixed closed lines
        stack = [i]
        seen.add(i)
        while stack:
            n = stack.pop()
            out.append(n)
            for j, e in adj[n]:
                if fixed[e] and status[e] and j not in seen:
                    seen.add(j)
                    stack.append(j)

    frontier: list[int] = []
    for r in sorted(pos[r] for r in case.roots):
        if r not in seen:
            absorb(r, frontier)
    while frontier:
        nxt: list[int] = []
        for i in frontier:
            for j, e in adj[i]:
                if not fixed[e] and j not in seen:
                    status[e] = 1
                    absorb(j, nxt)
        frontier = nxt
    return FirstStageDecision.from_status(case, np.repeat(status[:, None], case.T, axis=1))


def _start_vector(case, idx, cuts, x, beta, n_cols, col_beta, col_eta, backend):
    """Feasible master point for a given topology: optimal dispatch per cut, eta at the max."""
    aff = operation_model(case).system
    xv = x.to_vector(idx)
    u_loc = idx.local("u")
    start = np.zeros(n_cols)
    start[: idx.nx] = xv
    start[col_beta:col_eta] = beta.ravel()
    eta = 0.0
    for s, scen in enumerate(cuts):
        uv = np.zeros(idx.nu)
        uv[u_loc] = scen.u
        res = solve(aff.to_problem(xv, uv), backend=backend)
        if res.status != OPTIMAL:
            return None
        off = col_eta + 1 + s * idx.ny
        start[off: off + idx.ny] = res.x
        eta = max(eta, float(aff.d @ res.x + aff.d0 + scen.u.ravel() @ beta.ravel()))
    start[col_eta] = eta
    return start


def solve_master(
    case: CaseData,
    cuts: Sequence[ScenarioRealization],
    method: str = "dr-dmf",
    backend: Optional[str] = None,
    mip_gap: float = 1e-6,
    time_limit: Optional[float] = None,
    start: Optional[tuple[FirstStageDecision, np.ndarray]] = None,
) -> MasterResult:
    """min sum (mu-1)*beta + eta  s.t.  x in X, eta >= Q(x, u_s) + u_s . beta for every cut."""
    check_method(method)
    if not cuts:
        raise ValueError("master needs at least one cut scenario (seed with the all-intact trajectory)")
    idx, first = _first_stage(case, method == "dr-smf")
    aff = operation_model(case).system
    E, T = len(case.edges), case.T
    nx, ny, nb = idx.nx, idx.ny, E * T
    S = len(cuts)
    n_cols = nx + nb + 1 + S * ny
    col_beta = nx
    col_eta = nx + nb

    blocks = [[first.A, None, None] + [None] * S]
    rhs = [first.rhs]
    senses = [first.senses]
    u_loc = idx.local("u")
    for s, scen in enumerate(cuts):
        uv = np.zeros(idx.nu)
        uv[u_loc] = scen.u
        row = [aff.E, None, None] + [None] * S
        row[3 + s] = aff.F
        blocks.append(row)
        rhs.append(aff.b - aff.H @ uv)
        senses.append(aff.senses)
        # -eta + d.y_s + u_s.beta <= -d0
        beta_coef = sp.csr_matrix(scen.u.reshape(1, nb).astype(float))
        cut = [sp.csr_matrix((1, nx)), beta_coef, sp.csr_matrix([[-1.0]])] + [None] * S
        cut[3 + s] = sp.csr_matrix(aff.d.reshape(1, ny))
        blocks.append(cut)
        rhs.append(np.array([-aff.d0]))
        senses.append(np.array(["L"]))
    # bmat needs every block column sized at least once
    blocks[0][1] = sp.csr_matrix((first.A.shape[0], nb))
    blocks[0][2] = sp.csr_matrix((first.A.shape[0], 1))
    for s in range(S):
        if blocks[0][3 + s] is None:
            blocks[0][3 + s] = sp.csr_matrix((first.A.shape[0], ny))
    A = sp.bmat(blocks, format="csr")

    c = np.zeros(n_cols)
    lb = np.full(n_cols, -np.inf)
    ub = np.full(n_cols, np.inf)
    integ = np.zeros(n_cols, dtype=bool)
    lb[:nx], ub[:nx], integ[:nx] = first.lb, first.ub, first.integrality
    lb[col_beta:col_eta] = 0.0
    if method == "ro-dmf":
        ub[col_beta:col_eta] = 0.0
    else:
        coef = moment_coefficients(case).ravel()
        # mu_max = 0 entries never fail in the support the subproblem searches, so their price is idle
        ub[col_beta:col_eta] = np.where(coef <= -1.0, 0.0, beta_cap(case))
        c[col_beta:col_eta] = coef
    c[col_eta] = 1.0
    lb[col_eta] = 0.0

    if start is None:
        try:
            start = (spanning_forest(case), np.zeros((E, T)))
        except NotRadialError:
            start = None
    warm = None
    if start is not None:
        beta0 = np.zeros((E, T)) if method == "ro-dmf" else np.clip(start[1], 0.0, beta_cap(case))
        warm = _start_vector(case, idx, cuts, start[0], beta0, n_cols, col_beta, col_eta, backend)
    problem = ProblemSpec(
        c=c, A=A, senses=np.concatenate(senses), rhs=np.concatenate(rhs), lb=lb, ub=ub, integrality=integ,
        mip_gap=mip_gap, time_limit=time_limit, warm_start=warm,
    )
    res = get_backend(backend).solve(problem)
    if res.status not in (OPTIMAL, FEASIBLE_LIMIT):
        if res.status == "infeasible":
            raise MasterInfeasible("master problem is infeasible; check switching budget and initial topology")
        raise SolverError(f"master solve failed: {res.status} {res.message}")
    xv = res.x
    raw = FirstStageDecision.from_vector(idx, xv[:nx])
    sv_dev = float(np.abs(raw.sv_tp - np.round(raw.sv_tp)).max(initial=0.0))
    # the orientation of a radial forest is fixed by its roots, so status alone rebuilds x exactly
    x = FirstStageDecision.from_status(case, np.clip(raw.line_status, 0, 1))
    gap = res.gap if res.gap is not None else 0.0
    lower = res.bound if res.bound is not None else res.objective
    logger.debug("master: %d cuts, obj %.6g, gap %.2e, %.2fs", S, res.objective, gap, res.wall_time)
    return MasterResult(
        x=x,
        beta=xv[col_beta:col_eta].reshape(E, T).copy(),
        eta=float(xv[col_eta]),
        lower_bound=float(lower),
        objective=float(res.objective),
        gap=float(gap),
        wall_time=res.wall_time,
        sv_integrality=sv_dev,
        proven=res.status == OPTIMAL,
    )
