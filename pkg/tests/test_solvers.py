import numpy as np
import pytest
import scipy.sparse as sp

from microgrid_dro.solvers import (
    FEASIBLE_LIMIT,
    INFEASIBLE,
    OPTIMAL,
    BackendUnavailable,
    ProblemSpec,
    SolveResult,
    available_backends,
    dual_objective,
    get_backend,
    solve,
    verify_solution,
    write_lp,
)

BACKENDS = available_backends()


def spec(c, rows, senses, rhs, lb, ub, integer=None, **kw):
    n = len(c)
    return ProblemSpec(
        c=np.asarray(c, float), A=sp.csr_matrix(np.asarray(rows, float).reshape(-1, n)),
        senses=np.asarray(senses), rhs=np.asarray(rhs, float), lb=np.asarray(lb, float), ub=np.asarray(ub, float),
        integrality=np.asarray(integer if integer is not None else [False] * n), **kw,
    )


def transportation():
    # supplies 20, 30; demands 10, 25, 15
    cost = np.array([[2.0, 4.0, 5.0], [3.0, 1.0, 7.0]])
    rows, senses, rhs = [], [], []
    for i, s in enumerate((20.0, 30.0)):
        r = np.zeros((2, 3))
        r[i] = 1
        rows.append(r.ravel()), senses.append("L"), rhs.append(s)
    for j, d in enumerate((10.0, 25.0, 15.0)):
        r = np.zeros((2, 3))
        r[:, j] = 1
        rows.append(r.ravel()), senses.append("E"), rhs.append(d)
    return spec(cost.ravel(), rows, senses, rhs, np.zeros(6), np.full(6, np.inf))


@pytest.mark.parametrize("backend", BACKENDS)
def test_lower_bound_lp(backend):
    res = solve(spec([1.0], [[1.0]], ["G"], [3.0], [-np.inf], [np.inf]), backend=backend)
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(3.0)
    assert res.objective == pytest.approx(3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    res = solve(spec([0.0], [[1.0]], ["L"], [-1.0], [0.0], [np.inf]), backend=backend)
    assert res.status == INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_transportation_duals_complementary(backend):
    p = transportation()
    res = solve(p, backend=backend, want_duals=True)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(125.0)
    slack = p.rhs - p.A @ res.x
    assert np.max(np.abs(res.row_duals * slack)) <= 1e-8
    assert np.max(np.abs(res.reduced_costs * res.x)) <= 1e-8
    # stationarity: c = A'y + rc
    assert np.allclose(p.A.T @ res.row_duals + res.reduced_costs, p.c, atol=1e-8)
    rep = verify_solution(p, res)
    assert rep.duality_gap <= 1e-6
    assert dual_objective(p, res.row_duals, res.reduced_costs) == pytest.approx(125.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_knapsack_mip(backend):
    # max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5 over binaries: a = b = 1 wins with 9
    p = spec([-5, -4, -3], [[2, 3, 1]], ["L"], [5], [0, 0, 0], [1, 1, 1], integer=[True] * 3)
    res = solve(p, backend=backend)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(-9.0)
    assert np.allclose(res.x, [1, 1, 0])


def test_backends_agree_on_objective():
    p = transportation()
    vals = [solve(p, backend=b).objective for b in BACKENDS]
    assert max(vals) - min(vals) <= 1e-5 * max(1.0, abs(vals[0]))


def test_verify_flags_tampered_primal():
    p = transportation()
    res = solve(p)
    assert verify_solution(p, res).max_residual <= 1e-6
    bad = SolveResult(status=OPTIMAL, x=res.x.copy(), objective=res.objective)
    bad.x[0] += 5.0  # supply row 0 now over by 5
    rep = verify_solution(p, bad)
    assert rep.worst_row == 0
    assert rep.max_residual == pytest.approx(5.0)
    assert rep.objective_mismatch == pytest.approx(10.0)


def test_unknown_backend():
    with pytest.raises(BackendUnavailable):
        get_backend("cplex")


def test_time_limited_mip_keeps_incumbent():
    rng = np.random.default_rng(3)
    n = 60
    w = rng.integers(10, 100, n)
    v = rng.integers(10, 100, n)
    p = spec(-v, [w], ["L"], [w.sum() / 2], np.zeros(n), np.ones(n), integer=[True] * n,
             warm_start=np.zeros(n), time_limit=1e-3)
    res = solve(p)
    assert res.status in (OPTIMAL, FEASIBLE_LIMIT)
    assert verify_solution(p, res).max_residual <= 1e-6


def test_problem_check_rejects_bad_shapes():
    with pytest.raises(ValueError, match="finite bounds"):
        spec([1.0], [[1.0]], ["L"], [1.0], [0.0], [np.inf], integer=[True])
    with pytest.raises(ValueError, match="unknown row senses"):
        spec([1.0], [[1.0]], ["<"], [1.0], [0.0], [1.0])


def test_lp_export_carries_tags():
    p = transportation()
    text = write_lp(p, row_tags=["supply", "supply", "demand", "demand", "demand"])
    assert text.count("\\ supply") == 1 and text.count("\\ demand") == 1
    assert text.index("\\ supply") < text.index(" r0:") < text.index("\\ demand") < text.index(" r2:")
    assert "Minimize" in text and "End" in text
