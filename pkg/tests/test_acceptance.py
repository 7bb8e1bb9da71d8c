"""End-to-end acceptance checks.

Every test is tagged with the criterion it belongs to; the conftest rolls the
outcomes up into one PASS/FAIL line per criterion at the end of the session,
followed by the figures the tests report through ``note``.
"""
import time

import numpy as np
import pytest
from scipy import stats

from microgrid_dro.dro import brute_force_dro, brute_force_optimum, dualized_value, enumerate_first_stages, run_ccg
from microgrid_dro.model import check_all_steps, evaluate_q
from microgrid_dro.scenarios import SamplerConfig, compare_methods, sample_matrix, sample_scenarios

from cases import four_node, line_case, random_case, triangle, two_node
from oracles import check_dispatch, pattern_mismatches

ORDER = ("ro-dmf", "dr-smf", "dr-dmf")  # each run seeds the next

# IEEE 37-node budget: seconds per master/subproblem solve and C&CG iterations per method.
# The robust masters are the slowest and the baseline only needs a valid design.
IEEE_TIME_LIMIT = 30.0
IEEE_MAX_ITER = {"ro-dmf": 8, "dr-smf": 20, "dr-dmf": 20}
IEEE_TOL = 1e-4

MC_SCENARIOS = 1000
MC_SEED = 2024
REFERENCE_REDUCTIONS = {"dr-smf": 0.289, "ro-dmf": 0.623}

ORDER_TOL = 1e-9


def small_corpus():
    """21 small networks of at most 5 lines."""
    cases = [
        four_node(),
        four_node(T=3, k=2, mu=0.5, n_sw=2, cap=100.0),
        triangle(T=2),
        two_node(T=2),
        line_case(n=5, T=2, cap=25.0, demands=[0, 10, 10, 10, 10], weights=[10, 100, 10, 10, 10]),
    ]
    cases += [random_case(seed, max_edges=5) for seed in range(16)]
    return cases


def solve_in_order(case, max_iter=None, **kw):
    done = {}
    for method in ORDER:
        limit = {} if max_iter is None else {"max_iter": max_iter[method]}
        done[method] = run_ccg(case, method, seeds=list(done.values()), **limit, **kw)
    return done


@pytest.fixture(scope="session")
def corpus_runs():
    return [(case, solve_in_order(case)) for case in small_corpus()]


@pytest.fixture(scope="session")
def ieee_runs(ieee_case):
    started = time.perf_counter()
    sols = solve_in_order(ieee_case, IEEE_MAX_ITER, tol=IEEE_TOL, mip_gap=IEEE_TOL, time_limit=IEEE_TIME_LIMIT)
    return sols, time.perf_counter() - started


@pytest.fixture(scope="session")
def ieee_mc(ieee_case, ieee_runs):
    sols, _ = ieee_runs
    started = time.perf_counter()
    scen = sample_scenarios(ieee_case, SamplerConfig(MC_SCENARIOS, seed=MC_SEED))
    table = compare_methods([sols[m] for m in ("dr-dmf", "dr-smf", "ro-dmf")], scen, ieee_case, seed=MC_SEED)
    return table, time.perf_counter() - started


def sampled_designs(case, n, seed):
    designs = enumerate_first_stages(case, limit=5000)
    rng = np.random.default_rng(seed)
    return [designs[i] for i in rng.choice(len(designs), size=min(n, len(designs)), replace=False)]


@pytest.fixture(scope="session")
def duality_runs():
    """(case, x, primal, dual) for 5 designs on each of 12 random cases with at least 5 designs."""
    rows, seed = [], 100
    while len({id(r[0]) for r in rows}) < 12:
        case = random_case(seed, max_edges=4)
        seed += 1
        if case.k > 1 or case.T > 2 or len(enumerate_first_stages(case, limit=5000)) < 5:
            continue
        for x in sampled_designs(case, 5, seed):
            rows.append((case, x, brute_force_dro(x, case), dualized_value(x, case)))
    return rows


@pytest.fixture(scope="session")
def four_node_run():
    case = four_node()
    started = time.perf_counter()
    sol = run_ccg(case, "dr-dmf")
    ccg_time = time.perf_counter() - started
    return case, sol, brute_force_optimum(case, "dr-dmf"), ccg_time


# 1 ---------------------------------------------------------------------------------------------


@pytest.mark.criterion(1, "radiality")
def test_corpus_designs_radial(corpus_runs, note):
    assert len(corpus_runs) >= 20
    for case, sols in corpus_runs:
        for method, sol in sols.items():
            reports = check_all_steps(sol.first_stage, case)
            assert all(r.ok for r in reports), (case.name, method, [r.violations for r in reports if not r.ok])
    note(f"{len(corpus_runs)} small cases x {len(ORDER)} methods radial at every step")


@pytest.mark.slow
@pytest.mark.criterion(1, "radiality")
def test_ieee_designs_radial(ieee_case, ieee_runs, note):
    sols, _ = ieee_runs
    for method, sol in sols.items():
        assert all(r.ok for r in check_all_steps(sol.first_stage, ieee_case)), method
    note("IEEE 37-node designs radial at every step")


@pytest.mark.criterion(1, "radiality")
def test_arc_enumeration_agreement(note):
    started = time.perf_counter()
    total = 0
    for case in small_corpus():
        bad, tried = pattern_mismatches(case)
        assert bad == [], (case.name, bad[:5])
        total += tried
    note(f"MILP rows vs graph oracle agree on {total} arc patterns ({time.perf_counter() - started:.0f}s)")


# 2 ---------------------------------------------------------------------------------------------


@pytest.mark.criterion(2, "strong duality")
def test_brute_force_equals_dualized(duality_runs, note):
    worst = 0.0
    for case, x, primal, dual in duality_runs:
        rel = abs(dual.value - primal.value) / max(1e-9, abs(primal.value))
        worst = max(worst, rel if abs(primal.value) > 1e-9 else abs(dual.value))
        assert dual.value == pytest.approx(primal.value, rel=1e-6, abs=1e-9), case.name
    cases = len({id(r[0]) for r in duality_runs})
    note(f"{cases} cases x 5 designs, worst relative difference {worst:.1e}")


# 3 ---------------------------------------------------------------------------------------------


@pytest.mark.criterion(3, "C&CG vs brute force")
def test_ccg_matches_brute_force(four_node_run, note):
    case, sol, brute, seconds = four_node_run
    assert sol.converged and sol.iterations <= 10
    assert sol.objective == pytest.approx(brute.value, rel=1e-4)
    note(f"C&CG {sol.objective:.4f} vs brute force {brute.value:.4f} over {brute.n_designs} designs, "
         f"{sol.iterations} iterations, {seconds:.1f}s")


# 4 ---------------------------------------------------------------------------------------------


@pytest.mark.criterion(4, "McCormick exactness")
def test_mccormick_small(duality_runs, four_node_run, note):
    errors = [d.mccormick_error for *_, d in duality_runs] + [four_node_run[1].mccormick_error]
    usage = [d.bound_usage for *_, d in duality_runs] + [four_node_run[1].bound_usage]
    assert max(errors) <= 1e-8
    assert max(usage) < 1.0
    note(f"small cases: max linearization error {max(errors):.1e}, max dual-bound usage {max(usage):.2f}")


@pytest.mark.slow
@pytest.mark.criterion(4, "McCormick exactness")
def test_mccormick_ieee(ieee_runs, note):
    sols, _ = ieee_runs
    for method, sol in sols.items():
        assert sol.mccormick_error <= 1e-8, method
        assert sol.bound_usage < 1.0, method
    note("IEEE: max linearization error {:.1e}, max dual-bound usage {:.2f}".format(
        max(s.mccormick_error for s in sols.values()), max(s.bound_usage for s in sols.values())))


# 5 ---------------------------------------------------------------------------------------------


def assert_ordered(sols, label):
    dmf = sols["dr-dmf"].objective
    assert dmf <= sols["dr-smf"].objective + ORDER_TOL, label
    assert dmf <= sols["ro-dmf"].objective + ORDER_TOL, label


@pytest.mark.criterion(5, "conservatism ordering")
def test_ordering_small(corpus_runs, note):
    checked = 0
    for case, sols in corpus_runs:
        if not any(m < 1.0 for e in case.edges for m in e.mu_max):
            continue
        assert_ordered(sols, case.name)
        checked += 1
    unconverged = sum(not s.converged for _, sols in corpus_runs for s in sols.values())
    note(f"{checked} small cases ordered, {unconverged} runs unconverged")


@pytest.mark.slow
@pytest.mark.criterion(5, "conservatism ordering")
def test_ordering_ieee(ieee_runs, note):
    sols, seconds = ieee_runs
    assert_ordered(sols, "ieee37")
    for m in ORDER:
        s = sols[m]
        gap = (s.objective - s.lower_bound) / max(1e-9, abs(s.objective))
        note(f"IEEE {m}: value {s.objective:.1f} $/h, bound {s.lower_bound:.1f}, gap {gap:.2%}, "
             f"{s.iterations} iterations, converged={s.converged}")
    note(f"IEEE solves took {seconds / 60:.1f} min")


# 6 ---------------------------------------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.criterion(6, "Monte Carlo direction")
def test_monte_carlo_direction(ieee_mc, ieee_runs, note):
    table, seconds = ieee_mc
    dmf, smf, ro = (s.per_scenario for s in table.stats)
    totals = [s.expected_total for s in table.stats]
    p_dmf_smf = table.paired_tests()["dr-smf"]
    p_smf_ro = 0.0 if np.allclose(smf - ro, (smf - ro)[0]) and smf[0] < ro[0] else \
        float(stats.ttest_rel(smf, ro, alternative="less").pvalue)
    red = table.reductions()
    last = table.step_rows()[-2]
    note("expected VoLL ($): dr-dmf {:.1f}, dr-smf {:.1f}, ro-dmf {:.1f}".format(*totals))
    for m in ("dr-smf", "ro-dmf"):
        note(f"reduction of dr-dmf vs {m}: {red[m]:.1%} (reference {REFERENCE_REDUCTIONS[m]:.1%})")
    note(f"paired p-values: dr-dmf < dr-smf {p_dmf_smf:.2e}, dr-smf < ro-dmf {p_smf_ro:.2e}")
    note(f"last step: dr-dmf {last[0]:.1f} vs dr-smf {last[1]:.1f} (reference: near identical)")
    note(f"Monte Carlo took {seconds:.0f}s; solves plus Monte Carlo {(ieee_runs[1] + seconds) / 60:.1f} min")
    assert totals[0] < totals[1] < totals[2]
    assert p_dmf_smf < 0.05 and p_smf_ro < 0.05


# 7 ---------------------------------------------------------------------------------------------


def hygiene(case, sols):
    for sol in sols.values():
        assert sol.sv_integrality <= 1e-6
        for scen, _ in sol.worst_scenarios:
            check_dispatch(evaluate_q(sol.first_stage, scen, case), case, sol.first_stage)


@pytest.mark.criterion(7, "numerical hygiene")
def test_hygiene_small(corpus_runs, note):
    for case, sols in corpus_runs:
        hygiene(case, sols)
    note("small cases: worst-case dispatches clean, sv integral")


@pytest.mark.slow
@pytest.mark.criterion(7, "numerical hygiene")
def test_hygiene_ieee(ieee_case, ieee_runs, ieee_mc, note):
    sols, _ = ieee_runs
    hygiene(ieee_case, sols)
    table, _ = ieee_mc
    worst = max(s.max_residual for s in table.stats)
    assert worst <= 1e-6
    note(f"IEEE: max Monte Carlo dispatch residual {worst:.1e}, "
         f"max sv deviation {max(s.sv_integrality for s in sols.values()):.1e}")


# 8 ---------------------------------------------------------------------------------------------


@pytest.mark.criterion(8, "sampler statistics")
@pytest.mark.parametrize("which", ["ieee", "random"])
def test_sampler_marginals(which, ieee_case, note):
    case = ieee_case if which == "ieee" else random_case(3, max_edges=5, T=2)
    n = 10_000
    cfg = SamplerConfig(n, seed=MC_SEED)
    started = time.perf_counter()
    u = sample_matrix(case, cfg)
    p = cfg.marginals(case)
    failures = (u == 0).sum(axis=0)
    lo, hi = stats.binom.interval(0.999, n, p)
    outside = np.argwhere((failures < lo) | (failures > hi))
    assert outside.size == 0, outside.tolist()
    assert np.all(np.diff(u.astype(int), axis=2) <= 0)
    note(f"{which}: {p.size} marginals inside 99.9% intervals, {n} monotone trajectories "
         f"({time.perf_counter() - started:.1f}s)")
