"""Independent checks on the dualized model: primal DRO by enumeration, and the
dual value min_beta [sum (mu-1) beta + max_u (Q + u.beta)] by cutting planes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from ..model import FirstStageDecision, NotRadialError, ScenarioRealization, evaluate_q, operation_model
from ..netdata import CaseData
from ..solvers import OPTIMAL, ProblemSpec, SolverError, solve
from .master import beta_cap, moment_coefficients
from .subproblem import solve_subproblem
from .support import MAX_SUPPORT, SupportTooLarge, enumerate_support


@dataclass
class WorstDistribution:
    value: float  # $/h
    scenarios: list[ScenarioRealization]
    probabilities: np.ndarray
    q_values: np.ndarray  # $/h

    def positive(self, tol: float = 1e-9) -> list[tuple[ScenarioRealization, float]]:
        return [(s, float(p)) for s, p in zip(self.scenarios, self.probabilities) if p > tol]

    def moment_residual(self, mu_max: np.ndarray) -> float:
        """Largest violation of sum p = 1 and of the moment rows."""
        p = self.probabilities
        fail = sum(pi * (1 - s.u) for s, pi in zip(self.scenarios, p))
        return max(abs(p.sum() - 1.0), float(np.max(fail - mu_max, initial=0.0)), float(-p.min(initial=0.0)))


def worst_distribution(
    scenarios: Sequence[ScenarioRealization],
    q_values: Sequence[float],
    mu_max: np.ndarray,
    backend: Optional[str] = None,
) -> WorstDistribution:
    """max sum p_s Q_s s.t. sum p = 1, sum p_s (1 - u_s) <= mu_max, p >= 0."""
    q = np.asarray(q_values, dtype=float)
    S = len(scenarios)
    E, T = mu_max.shape
    fail = np.stack([(1 - s.u).ravel() for s in scenarios], axis=1).astype(float)  # (E*T, S)
    A = sp.vstack([sp.csr_matrix(np.ones((1, S))), sp.csr_matrix(fail)], format="csr")
    problem = ProblemSpec(
        c=-q, A=A, senses=np.array(["E"] + ["L"] * (E * T)), rhs=np.concatenate([[1.0], mu_max.ravel()]),
        lb=np.zeros(S), ub=np.full(S, np.inf), integrality=np.zeros(S, dtype=bool),
    )
    res = solve(problem, backend=backend)
    if res.status != OPTIMAL:
        raise SolverError(f"worst-distribution LP failed: {res.status}")
    p = np.clip(res.x, 0.0, None)
    return WorstDistribution(value=-res.objective, scenarios=list(scenarios), probabilities=p, q_values=q)


def brute_force_dro(
    x: FirstStageDecision, case: CaseData, backend: Optional[str] = None, limit: int = MAX_SUPPORT
) -> WorstDistribution:
    """Worst-case expected weighted shedding ($/h) by enumerating the whole support."""
    support = enumerate_support(case, limit=limit)
    q = [evaluate_q(x, s, case, backend=backend).objective for s in support]
    mu = np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T)
    return worst_distribution(support, q, mu, backend=backend)


@dataclass
class DualizedValue:
    value: float  # $/h
    beta: np.ndarray  # $/h per unit probability
    iterations: int
    mccormick_error: float
    bound_usage: float


def dualized_value(
    x: FirstStageDecision,
    case: CaseData,
    backend: Optional[str] = None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> DualizedValue:
    """min over beta >= 0 of sum (mu-1) beta + solve_subproblem(x, beta).value, by Kelley cutting planes."""
    aff = operation_model(case).system
    E, T = len(case.edges), case.T
    coef = moment_coefficients(case).ravel()
    cap = beta_cap(case)
    nb = E * T
    cuts_u, cuts_q = [], []
    beta = np.zeros(nb)
    best = np.inf
    best_beta = beta
    lower = -np.inf
    mc_err, usage = 0.0, 0.0
    for it in range(1, max_iter + 1):
        sub = solve_subproblem(x, beta.reshape(E, T), case, backend=backend)
        mc_err = max(mc_err, sub.mccormick_error)
        usage = max(usage, sub.bound_usage)
        upper = float(coef @ beta) + sub.value
        if upper < best:
            best, best_beta = upper, beta.copy()
        cuts_u.append(sub.scenario.u.ravel().astype(float))
        cuts_q.append(sub.q_value)
        # min coef.beta + eta  s.t.  eta >= q_s + u_s.beta
        S = len(cuts_u)
        A = sp.csr_matrix(np.hstack([np.array(cuts_u), -np.ones((S, 1))]))
        c = np.append(coef, 1.0)
        lp = ProblemSpec(
            c=c, A=A, senses=np.full(S, "L"), rhs=-np.array(cuts_q),
            lb=np.append(np.zeros(nb), -np.inf), ub=np.append(np.full(nb, cap), np.inf),
            integrality=np.zeros(nb + 1, dtype=bool),
        )
        res = solve(lp, backend=backend)
        if res.status != OPTIMAL:
            raise SolverError(f"cutting-plane LP failed: {res.status}")
        lower = res.objective
        beta = np.clip(res.x[:nb], 0.0, cap)
        if best - lower <= tol * max(1.0, abs(best)):
            break
    scale = aff.obj_scale
    return DualizedValue(best * scale, best_beta.reshape(E, T) * scale, it, mc_err, usage)


def enumerate_first_stages(case: CaseData, static: bool = False, limit: int = 100_000) -> list[FirstStageDecision]:
    """Every radial line-status trajectory respecting the switching budget, oriented from the roots."""
    E, T = len(case.edges), case.T
    if 2**E > limit:
        raise SupportTooLarge(f"2^{E} line-status patterns exceed the limit {limit}")
    patterns = []
    pinned = [(e, int(edge.initially_closed)) for e, edge in enumerate(case.edges) if not edge.switchable]
    for bits in itertools.product((0, 1), repeat=E):
        if any(bits[e] != v for e, v in pinned):
            continue
        col = np.array(bits, dtype=int)[:, None]
        try:
            FirstStageDecision.from_status(case, col)
        except NotRadialError:
            continue
        patterns.append(np.array(bits, dtype=int))
    trajectories = [[p] for p in patterns]
    for _ in range(1, T):
        nxt = []
        for traj in trajectories:
            if static:
                nxt.append(traj + [traj[-1]])
                continue
            for p in patterns:
                if int(np.abs(p - traj[-1]).sum()) <= case.n_sw_max:
                    nxt.append(traj + [p])
        trajectories = nxt
        if len(trajectories) > limit:
            raise SupportTooLarge(f"more than {limit} first-stage trajectories")
    return [FirstStageDecision.from_status(case, np.stack(tr, axis=1)) for tr in trajectories]


@dataclass
class BruteForceOptimum:
    value: float  # $/h
    decision: FirstStageDecision
    n_designs: int


def brute_force_optimum(case: CaseData, method: str = "dr-dmf", backend: Optional[str] = None) -> BruteForceOptimum:
    """Optimal value by enumerating first stages and, for each, the whole support."""
    designs = enumerate_first_stages(case, static=method == "dr-smf")
    support = enumerate_support(case)
    mu = np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T)
    best, best_x = np.inf, None
    for x in designs:
        q = [evaluate_q(x, s, case, backend=backend).objective for s in support]
        val = max(q) if method == "ro-dmf" else worst_distribution(support, q, mu, backend=backend).value
        if val < best:
            best, best_x = val, x
    return BruteForceOptimum(best, best_x, len(designs))
