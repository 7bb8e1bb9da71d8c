"""Column-and-constraint generation for the min-max-min form, and the Solution record it produces."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..model import FirstStageDecision, ScenarioRealization, evaluate_q, operation_model
from ..netdata import CaseData, case_fingerprint
from ..solvers import SolverError
from .master import check_method, moment_coefficients, solve_master
from .oracle import worst_distribution
from .subproblem import solve_subproblem

logger = logging.getLogger(__name__)

LOOSE_GAP_CAP = 0.05  # loosest master MIP gap used while the bounds are far apart
GAP_FLOOR = 1e-6  # internal units; below this the gap is measured absolutely


class CcgStallError(SolverError):
    """The subproblem returned a scenario already in the cut pool while the gap is still open."""


@dataclass
class IterationRecord:
    iteration: int
    lower_bound: float  # $/h
    upper_bound: float
    sub_value: float
    master_time: float
    sub_time: float
    failed: list[str]  # "line@step" labels of the chosen trajectory

    def gap(self) -> float:
        return (self.upper_bound - self.lower_bound) / max(GAP_FLOOR, abs(self.upper_bound))


@dataclass
class CcgState:
    cut_scenarios: list[ScenarioRealization]
    lower_bound: float = -np.inf
    upper_bound: float = np.inf
    beta: Optional[np.ndarray] = None
    log: list[IterationRecord] = field(default_factory=list)
    incumbent: Optional[FirstStageDecision] = None
    mccormick_error: float = 0.0
    bound_usage: float = 0.0
    sv_integrality: float = 0.0

    def gap(self) -> float:
        if not np.isfinite(self.upper_bound):
            return np.inf
        return (self.upper_bound - self.lower_bound) / max(GAP_FLOOR, abs(self.upper_bound))

    def has_cut(self, scen: ScenarioRealization) -> bool:
        return any(scen == s for s in self.cut_scenarios)


@dataclass(frozen=True)
class Solution:
    method: str
    first_stage: FirstStageDecision
    beta: Optional[np.ndarray]  # $/h per unit failure probability, (E, T); None for ro-dmf
    objective: float  # worst-case expected weighted shedding rate, $/h summed over steps
    worst_scenarios: list[tuple[ScenarioRealization, float]]
    converged: bool
    iterations: int
    lower_bound: float
    log: list[IterationRecord]
    case_hash: str
    mccormick_error: float = 0.0
    bound_usage: float = 0.0
    sv_integrality: float = 0.0

    def expected_voll(self, step_hours: float) -> float:
        """Worst-case expected VoLL in $ over the horizon."""
        return self.objective * step_hours

    def line_status(self) -> np.ndarray:
        return self.first_stage.line_status


def _labels(case: CaseData, scen: ScenarioRealization) -> list[str]:
    E, T = scen.u.shape
    return [f"{case.edges[e].label}@{t + 1}" for e in range(E) for t in range(T) if scen.u[e, t] == 0]


def run_ccg(
    case: CaseData,
    method: str = "dr-dmf",
    tol: float = 1e-6,
    max_iter: int = 50,
    backend: Optional[str] = None,
    mip_gap: float = 1e-6,
    time_limit: Optional[float] = None,
    seeds: Sequence[Solution] = (),
) -> Solution:
    """Solve ``method`` on ``case`` by alternating master and subproblem.

    ``seeds`` are finished solutions of the same case (any method). Their
    worst scenarios join the initial cut pool. Each one whose first stage is
    feasible here starts the upper bound at its stored objective and warm
    starts the first master: a ro-dmf objective bounds the DRO value of its
    design from above, and the DRO methods share one objective. The returned
    value is then never worse than any seed's.

    ``time_limit`` caps each master and subproblem solve. When a master stops
    at the limit and its cut is already in the pool, the next master gets
    twice the time and the full ``mip_gap``. A solution that runs out of
    iterations is returned with ``converged=False`` and valid bounds.
    """
    check_method(method)
    if tol <= 0:
        raise ValueError("tol must be positive")
    E, T = len(case.edges), case.T
    scale = operation_model(case).system.obj_scale
    coef = moment_coefficients(case)
    robust = method == "ro-dmf"
    state = CcgState(cut_scenarios=[ScenarioRealization.all_intact(E, T)])
    best_beta = np.zeros((E, T))
    for seed in seeds:
        usable = _seed_usable(seed, method, case)
        # a seed's worst scenarios lie in the support, so they are valid cuts for every method
        for scen, _ in seed.worst_scenarios:
            if not state.has_cut(scen):
                state.cut_scenarios.append(scen)
        if usable and seed.objective / scale < state.upper_bound:
            state.upper_bound = seed.objective / scale
            state.incumbent = seed.first_stage
            best_beta = np.zeros((E, T)) if seed.beta is None or robust else seed.beta / scale
            logger.info("ccg %s: seeded UB %.6g from %s", method, seed.objective, seed.method)
    converged = False
    last_sub = None
    it = 0
    start = None if state.incumbent is None else (state.incumbent, best_beta)
    limit = time_limit
    tighten = False
    for it in range(1, max_iter + 1):
        # far from convergence an approximate master is enough: its dual bound stays valid
        g = state.gap()
        loose = mip_gap if tighten or not np.isfinite(g) else max(mip_gap, min(LOOSE_GAP_CAP, g / 4))
        m = solve_master(case, state.cut_scenarios, method, backend=backend, mip_gap=loose,
                         time_limit=limit, start=start)
        state.lower_bound = max(state.lower_bound, m.lower_bound)
        state.sv_integrality = max(state.sv_integrality, m.sv_integrality)
        beta = np.zeros((E, T)) if robust else np.clip(m.beta, 0.0, None)

        sub = solve_subproblem(m.x, beta, case, backend=backend, mip_gap=mip_gap, time_limit=limit)
        state.mccormick_error = max(state.mccormick_error, sub.mccormick_error)
        state.bound_usage = max(state.bound_usage, sub.bound_usage)
        candidate = (0.0 if robust else float(np.sum(coef * beta))) + sub.value_bound
        if candidate < state.upper_bound:
            state.upper_bound = candidate
            state.incumbent = m.x
            best_beta = beta
            last_sub = sub
        state.beta = best_beta
        # the best design so far anchors the next master's neighbourhood heuristics
        start = (state.incumbent, best_beta) if state.incumbent is not None else (m.x, m.beta)
        state.log.append(
            IterationRecord(
                iteration=it,
                lower_bound=state.lower_bound * scale,
                upper_bound=state.upper_bound * scale,
                sub_value=sub.value * scale,
                master_time=m.wall_time,
                sub_time=sub.wall_time,
                failed=_labels(case, sub.scenario),
            )
        )
        logger.info("ccg %s it %d: LB %.6g UB %.6g gap %.2e (master %.1fs, sub %.1fs)", method, it,
                    state.lower_bound * scale, state.upper_bound * scale, state.gap(), m.wall_time, sub.wall_time)
        if state.gap() <= tol:
            converged = True
            break
        if not state.has_cut(sub.scenario):
            state.cut_scenarios.append(sub.scenario)
            tighten = False
            continue
        # a repeated cut adds nothing; only a master solved to full precision makes that a stall
        if m.proven and loose <= mip_gap:
            raise CcgStallError(
                f"iteration {it}: subproblem repeated a cut with gap {state.gap():.3e} > tol; "
                "tighten the master MIP gap"
            )
        tighten = True
        if not m.proven and limit:
            limit *= 2
    if not converged:
        logger.warning("ccg %s stopped at max_iter=%d with gap %.3e", method, max_iter, state.gap())

    x = state.incumbent
    worst = _worst_scenarios(case, x, state, last_sub, robust, backend)
    return Solution(
        method=method,
        first_stage=x,
        beta=None if robust else best_beta * scale,
        objective=state.upper_bound * scale,
        worst_scenarios=worst,
        converged=converged,
        iterations=it,
        lower_bound=state.lower_bound * scale,
        log=state.log,
        case_hash=case_fingerprint(case),
        mccormick_error=state.mccormick_error,
        bound_usage=state.bound_usage,
        sv_integrality=state.sv_integrality,
    )


def _seed_usable(seed: Solution, method: str, case: CaseData) -> bool:
    if seed.case_hash != case_fingerprint(case):
        raise ValueError(f"seed solution ({seed.method}) belongs to a different case")
    if method == "ro-dmf" and seed.method != "ro-dmf":
        # a DRO objective says nothing about the worst single scenario
        return False
    if method == "dr-smf":
        st = seed.first_stage.line_status
        return bool(np.all(st == st[:, :1]))
    return True


def _worst_scenarios(case, x, state, last_sub, robust, backend):
    """Worst distribution supported on the cut pool plus the incumbent's argmax scenario."""
    pool = list(state.cut_scenarios)
    if last_sub is not None and not state.has_cut(last_sub.scenario):
        pool.append(last_sub.scenario)
    q = [evaluate_q(x, s, case, backend=backend).objective for s in pool]
    if robust:
        i = int(np.argmax(q))
        return [(pool[i], 1.0)]
    mu = np.array([e.mu_max for e in case.edges], dtype=float).reshape(len(case.edges), case.T)
    return worst_distribution(pool, q, mu, backend=backend).positive()


# serialization ----------------------------------------------------------------------------------


def solution_to_dict(sol: Solution, case: CaseData, include_timing: bool = False) -> dict:
    """Plain-JSON view. Wall times are left out unless asked for so that reruns are byte-identical."""
    x = sol.first_stage
    steps = []
    for t in range(case.T):
        steps.append({
            "step": t + 1,
            "closed_lines": x.closed_lines(case, t),
            "membership": x.membership(case, t),
        })
    log = []
    for r in sol.log:
        row = {
            "iteration": r.iteration,
            "lower_bound": r.lower_bound,
            "upper_bound": r.upper_bound,
            "subproblem_value": r.sub_value,
            "failed": r.failed,
        }
        if include_timing:
            row["master_time"] = r.master_time
            row["subproblem_time"] = r.sub_time
        log.append(row)
    return {
        "method": sol.method,
        "case_hash": sol.case_hash,
        "objective": sol.objective,
        "expected_voll": sol.expected_voll(case.step_hours),
        "lower_bound": sol.lower_bound,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "steps": steps,
        "beta": None if sol.beta is None else {
            e.label: [float(b) for b in sol.beta[i]] for i, e in enumerate(case.edges)
        },
        "worst_scenarios": [
            {"probability": p, "failed": _labels(case, s)} for s, p in sol.worst_scenarios
        ],
        "diagnostics": {
            "mccormick_error": sol.mccormick_error,
            "dual_bound_usage": sol.bound_usage,
            "sv_integrality": sol.sv_integrality,
        },
        "log": log,
        "first_stage": {
            "c": x.c.astype(int).tolist(),
            "sv_tp": x.sv_tp.astype(int).tolist(),
            "v_cl": x.v_cl.astype(int).tolist(),
            "v_op": x.v_op.astype(int).tolist(),
            "f": x.f.tolist(),
        },
    }


def dumps_solution(sol: Solution, case: CaseData) -> str:
    return json.dumps(solution_to_dict(sol, case), indent=2, sort_keys=False) + "\n"


def save_solution(sol: Solution, case: CaseData, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dumps_solution(sol, case), encoding="utf-8")
    return path


def _scenario_from_labels(case: CaseData, failed: list[str]) -> ScenarioRealization:
    u = np.ones((len(case.edges), case.T), dtype=np.int8)
    pos = {e.label: i for i, e in enumerate(case.edges)}
    for item in failed:
        label, step = item.rsplit("@", 1)
        u[pos[label], int(step) - 1] = 0
    return ScenarioRealization(u)


def solution_from_dict(data: dict, case: CaseData) -> Solution:
    fs = data["first_stage"]
    x = FirstStageDecision(**{k: np.asarray(fs[k], dtype=float if k == "f" else int) for k in
                              ("c", "sv_tp", "v_cl", "v_op", "f")})
    beta = data.get("beta")
    beta_arr = None if beta is None else np.array([beta[e.label] for e in case.edges], dtype=float)
    log = [
        IterationRecord(r["iteration"], r["lower_bound"], r["upper_bound"], r["subproblem_value"],
                        r.get("master_time", 0.0), r.get("subproblem_time", 0.0), list(r["failed"]))
        for r in data.get("log", [])
    ]
    diag = data.get("diagnostics", {})
    return Solution(
        method=check_method(data["method"]),
        first_stage=x,
        beta=beta_arr,
        objective=float(data["objective"]),
        worst_scenarios=[(_scenario_from_labels(case, w["failed"]), float(w["probability"]))
                         for w in data.get("worst_scenarios", [])],
        converged=bool(data["converged"]),
        iterations=int(data["iterations"]),
        lower_bound=float(data["lower_bound"]),
        log=log,
        case_hash=data["case_hash"],
        mccormick_error=float(diag.get("mccormick_error", 0.0)),
        bound_usage=float(diag.get("dual_bound_usage", 0.0)),
        sv_integrality=float(diag.get("sv_integrality", 0.0)),
    )


def load_solution(path: Union[str, Path], case: CaseData) -> Solution:
    return solution_from_dict(json.loads(Path(path).read_text(encoding="utf-8")), case)
