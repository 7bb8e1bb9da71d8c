import itertools
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import microgrid_dro.dro.ccg as ccg_mod
from microgrid_dro.dro import (
    AmbiguitySpec,
    CcgStallError,
    SupportTooLarge,
    brute_force_dro,
    brute_force_optimum,
    dualized_value,
    dumps_solution,
    enumerate_first_stages,
    enumerate_support,
    run_ccg,
    solution_from_dict,
    solution_to_dict,
    solve_master,
    solve_subproblem,
    support_size,
)
from microgrid_dro.dro.master import moment_coefficients
from microgrid_dro.model import ScenarioRealization, evaluate_q, operation_model

from cases import line_case, random_case


def bit_filter_support(E, T, k):
    """All 0/1 matrices that are monotone per line with at most k zeros per column."""
    out = set()
    for bits in itertools.product((0, 1), repeat=E * T):
        u = np.array(bits).reshape(E, T)
        if np.all(np.diff(u, axis=1) <= 0) and np.all((1 - u).sum(axis=0) <= k):
            out.add(u.tobytes())
    return out


def with_mu(case, value):
    edges = tuple(replace(e, mu_max=(value,) * case.T) for e in case.edges)
    return replace(case, edges=edges)


def internal(case, dollars):
    return dollars / operation_model(case).system.obj_scale


# support ----------------------------------------------------------------------------------------


def test_single_edge_supports():
    one = line_case(n=2, T=1, k=1)
    assert [s.u.tolist() for s in enumerate_support(one)] == [[[1]], [[0]]]
    two = line_case(n=2, T=2, k=1)
    assert sorted(s.u.ravel().tolist() for s in enumerate_support(two)) == [[0, 0], [1, 0], [1, 1]]


@pytest.mark.parametrize("E,T,k", [(2, 2, 1), (2, 2, 2), (3, 2, 1), (3, 3, 2), (4, 2, 1), (2, 3, 0)])
def test_support_matches_bit_filter(E, T, k):
    case = line_case(n=E + 1, T=T, k=k)
    got = enumerate_support(case)
    assert {s.u.astype(np.int64).tobytes() for s in got} == bit_filter_support(E, T, k)
    assert len(got) == support_size(E, T, k) == len(set(got))
    assert all(s.in_support(k) for s in got)


def test_two_lines_two_steps_budget_one():
    assert support_size(2, 2, 1) == len(bit_filter_support(2, 2, 1)) == 5


def test_support_guard():
    with pytest.raises(SupportTooLarge):
        enumerate_support(line_case(n=9, T=4, k=3), limit=1000)


def test_ambiguity_witness(four):
    amb = AmbiguitySpec.from_case(four)
    assert amb.is_nonempty()
    assert amb.slater_witness().in_support(four.k)


# subproblem -------------------------------------------------------------------------------------


def sample_designs(case, n, seed):
    designs = enumerate_first_stages(case, limit=5000)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(designs), size=min(n, len(designs)), replace=False)
    return [designs[i] for i in picks]


def enumerated_max(x, beta, case):
    """max over the support of Q(x,u) + u.beta, in internal units."""
    scale = operation_model(case).system.obj_scale
    return max(evaluate_q(x, s, case).objective / scale + float(np.sum(s.u * beta)) for s in enumerate_support(case))


def test_k0_subproblem_returns_intact(four):
    case = replace(four, k=0)
    x = sample_designs(case, 1, 0)[0]
    beta = np.full((4, 2), 0.01)
    sub = solve_subproblem(x, beta, case)
    assert np.all(sub.scenario.u == 1)
    q1 = internal(case, evaluate_q(x, ScenarioRealization.all_intact(4, 2), case).objective)
    assert sub.value == pytest.approx(q1 + beta.sum(), rel=1e-9)


def test_single_failure_enumeration():
    case = random_case(3, T=1, k=1)
    E = len(case.edges)
    for x in sample_designs(case, 3, 1):
        sub = solve_subproblem(x, np.zeros((E, 1)), case)
        singles = [np.ones((E, 1), dtype=int)]
        for e in range(E):
            u = np.ones((E, 1), dtype=int)
            u[e] = 0
            singles.append(u)
        best = max(evaluate_q(x, ScenarioRealization(u), case).objective for u in singles)
        assert sub.value == pytest.approx(internal(case, best), rel=1e-7, abs=1e-10)


@settings(max_examples=15)
@given(st.integers(0, 29), st.integers(0, 10_000))
def test_subproblem_equals_enumeration(seed, draw):
    case = random_case(seed)
    E, T = len(case.edges), case.T
    rng = np.random.default_rng(draw)
    x = sample_designs(case, 1, draw)[0]
    beta = rng.uniform(0, 0.02, size=(E, T)) * rng.integers(0, 2, size=(E, T))
    sub = solve_subproblem(x, beta, case)
    assert sub.scenario.in_support(case.k)
    assert sub.value == pytest.approx(enumerated_max(x, beta, case), rel=1e-7, abs=1e-10)
    assert sub.mccormick_error <= 1e-8
    assert sub.bound_usage < 1.0
    q = internal(case, evaluate_q(x, sub.scenario, case).objective)
    assert sub.q_value == pytest.approx(q, rel=1e-7, abs=1e-10)


def test_riskless_lines_never_fail():
    case = line_case(n=4, T=3, k=2, cap=25.0)
    mus = [(0.0, 0.2, 0.4), (0.3, 0.3, 0.0), (0.1, 0.2, 0.3)]
    case = replace(case, edges=tuple(replace(e, mu_max=m) for e, m in zip(case.edges, mus)))
    support = enumerate_support(case)
    mu = np.array(mus)
    assert all(np.all((s.u == 1) | (mu > 0)) for s in support)
    assert len(support) < support_size(3, 3, 2)
    x = enumerate_first_stages(case)[-1]
    for beta in (np.zeros((3, 3)), np.full((3, 3), 0.01)):
        sub = solve_subproblem(x, beta, case)
        assert np.all((sub.scenario.u == 1) | (mu > 0))
        assert sub.value == pytest.approx(enumerated_max(x, beta, case), rel=1e-7, abs=1e-10)


def test_negative_price_rejected(four):
    x = sample_designs(four, 1, 0)[0]
    with pytest.raises(ValueError):
        solve_subproblem(x, -np.ones((4, 2)), four)


# primal and dual oracles ------------------------------------------------------------------------


def test_intact_support_value(four):
    case = replace(four, k=0)
    x = sample_designs(case, 1, 2)[0]
    wd = brute_force_dro(x, case)
    assert wd.value == pytest.approx(evaluate_q(x, ScenarioRealization.all_intact(4, 2), case).objective)


def test_vacuous_moments_give_robust_value(four):
    case = with_mu(four, 1.0)
    x = sample_designs(case, 1, 3)[0]
    worst = max(evaluate_q(x, s, case).objective for s in enumerate_support(case))
    assert brute_force_dro(x, case).value == pytest.approx(worst, rel=1e-9)


def test_three_lines_strong_duality():
    case = with_mu(line_case(n=4, T=1, k=1, cap=25.0, demands=[0, 10, 10, 10], weights=[10, 100, 10, 10]), 0.3)
    for x in enumerate_first_stages(case):
        primal = brute_force_dro(x, case)
        dual = dualized_value(x, case)
        assert dual.value == pytest.approx(primal.value, rel=1e-6, abs=1e-9)
        assert dual.mccormick_error <= 1e-8 and dual.bound_usage < 1


def test_worst_distribution_is_valid(four):
    x = sample_designs(four, 1, 4)[0]
    wd = brute_force_dro(x, four)
    mu = np.array([e.mu_max for e in four.edges])
    assert wd.moment_residual(mu) <= 1e-8
    assert sum(p for _, p in wd.positive()) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=6)
@given(st.integers(0, 29))
def test_duality_on_random_cases(seed):
    case = random_case(seed)
    for x in sample_designs(case, 2, seed):
        primal = brute_force_dro(x, case).value
        assert dualized_value(x, case).value == pytest.approx(primal, rel=1e-6, abs=1e-9)


# master -----------------------------------------------------------------------------------------


def test_k0_master_is_deterministic_formation(four):
    case = replace(four, k=0)
    intact = ScenarioRealization.all_intact(4, 2)
    m = solve_master(case, [intact], "dr-dmf")
    assert np.allclose(m.beta, 0.0)
    best = min(evaluate_q(x, intact, case).objective for x in enumerate_first_stages(case))
    assert m.objective * operation_model(case).system.obj_scale == pytest.approx(best, rel=1e-6)


def test_static_master_never_beats_dynamic(four):
    cuts = [s for s in enumerate_support(four)][:4]
    dyn = solve_master(four, cuts, "dr-dmf")
    sta = solve_master(four, cuts, "dr-smf")
    assert sta.objective >= dyn.objective - 1e-9
    assert np.all(sta.x.line_status == sta.x.line_status[:, :1])


def test_master_dual_bound_below_incumbent(four):
    m = solve_master(four, enumerate_support(four), "ro-dmf")
    assert m.lower_bound <= m.objective + 1e-9 and m.proven


# column-and-constraint generation ---------------------------------------------------------------


def test_k0_converges_in_one_iteration(four):
    case = replace(four, k=0)
    sol = run_ccg(case, "dr-dmf")
    assert sol.converged and sol.iterations == 1 and len(sol.log) == 1
    best = min(evaluate_q(x, ScenarioRealization.all_intact(4, 2), case).objective
               for x in enumerate_first_stages(case))
    assert sol.objective == pytest.approx(best, rel=1e-6)


@pytest.mark.parametrize("method", ["ro-dmf", "dr-smf"])
def test_other_methods_match_brute_force(four, method):
    sol = run_ccg(four, method)
    assert sol.converged
    assert sol.objective == pytest.approx(brute_force_optimum(four, method).value, rel=1e-4)


@pytest.mark.parametrize("seed", [1, 5, 8])
def test_random_case_matches_brute_force(seed):
    case = random_case(seed)
    sol = run_ccg(case, "dr-dmf")
    assert sol.converged
    assert sol.objective == pytest.approx(brute_force_optimum(case).value, rel=1e-4, abs=1e-6)


def test_bounds_are_monotone(four):
    sol = run_ccg(four, "dr-dmf")
    lbs = [r.lower_bound for r in sol.log]
    ubs = [r.upper_bound for r in sol.log]
    assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(ubs, ubs[1:]))
    assert all(lo <= hi + 1e-9 * max(1.0, abs(hi)) for lo, hi in zip(lbs, ubs))


def test_worst_distribution_over_cut_pool(four):
    sol = run_ccg(four, "dr-dmf")
    mu = np.array([e.mu_max for e in four.edges])
    probs = np.array([p for _, p in sol.worst_scenarios])
    fails = sum(p * (1 - s.u) for s, p in sol.worst_scenarios)
    assert probs.sum() == pytest.approx(1.0, abs=1e-8)
    assert np.all(fails <= mu + 1e-8)
    expected = sum(p * evaluate_q(sol.first_stage, s, four).objective for s, p in sol.worst_scenarios)
    assert expected == pytest.approx(sol.objective, rel=1e-6)


def test_repeated_cut_raises_stall(four, monkeypatch):
    first = {}
    real = ccg_mod.solve_master

    def frozen(case, cuts, method, **kw):
        if "m" not in first:
            first["m"] = real(case, cuts, method, **kw)
        return first["m"]

    monkeypatch.setattr(ccg_mod, "solve_master", frozen)
    with pytest.raises(CcgStallError, match="repeated a cut"):
        run_ccg(four, "dr-dmf")


def test_time_limited_repeat_escalates(four, monkeypatch):
    first, limits = {}, []
    real = ccg_mod.solve_master

    def limited(case, cuts, method, **kw):
        limits.append(kw["time_limit"])
        if "m" not in first:
            first["m"] = replace(real(case, cuts, method, **kw), proven=False)
        return first["m"]

    monkeypatch.setattr(ccg_mod, "solve_master", limited)
    sol = run_ccg(four, "dr-dmf", time_limit=5.0, max_iter=4)
    assert not sol.converged and sol.iterations == 4
    assert limits == [5.0, 5.0, 10.0, 20.0]
    assert sol.lower_bound <= sol.objective


def test_seeds_order_values(four):
    ro = run_ccg(four, "ro-dmf")
    smf = run_ccg(four, "dr-smf", seeds=[ro])
    dmf = run_ccg(four, "dr-dmf", seeds=[ro, smf])
    assert dmf.objective <= smf.objective + 1e-9 and dmf.objective <= ro.objective + 1e-9


def test_seed_scenarios_warm_the_pool(four):
    smf = run_ccg(four, "dr-smf")
    cold = run_ccg(four, "dr-dmf")
    warm = run_ccg(four, "dr-dmf", seeds=[smf])
    assert warm.objective == pytest.approx(cold.objective, rel=1e-6)
    # the seed's worst scenarios are cuts from the first master on
    assert warm.log[0].lower_bound > cold.log[0].lower_bound
    assert warm.iterations <= cold.iterations


def test_seed_from_other_case_rejected(four):
    ro = run_ccg(four, "ro-dmf")
    with pytest.raises(ValueError, match="different case"):
        run_ccg(replace(four, k=0), "dr-dmf", seeds=[ro])


def test_dynamic_seed_ignored_by_static(four):
    dmf = run_ccg(four, "dr-dmf")
    assert not ccg_mod._seed_usable(dmf, "ro-dmf", four)
    dynamic = not np.all(dmf.line_status() == dmf.line_status()[:, :1])
    assert ccg_mod._seed_usable(dmf, "dr-smf", four) is not dynamic


def test_bad_tolerance(four):
    with pytest.raises(ValueError):
        run_ccg(four, "dr-dmf", tol=0)
    with pytest.raises(ValueError):
        run_ccg(four, "bogus")


def test_solution_round_trip(four):
    sol = run_ccg(four, "dr-dmf")
    text = dumps_solution(sol, four)
    back = solution_from_dict(json.loads(text), four)
    assert back.objective == sol.objective and back.method == "dr-dmf"
    assert np.array_equal(back.line_status(), sol.line_status())
    assert dumps_solution(back, four) == text
    d = solution_to_dict(sol, four)
    assert [s["step"] for s in d["steps"]] == [1, 2]
    assert d["steps"][0]["membership"]["1"] == "1"
    assert set(d["beta"]) == {e.label for e in four.edges}


def test_moment_coefficients(four):
    assert np.allclose(moment_coefficients(four), 0.3 - 1.0)
