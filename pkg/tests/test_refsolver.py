import math

import numpy as np
import pytest
from hypothesis import assume, example, given, settings
from hypothesis import strategies as st

from tnep_facts import fixtures, formulations
from tnep_facts.milp_core import Integrality, ModelIR, Sense, SolveStatus
from tnep_facts.refsolver import (
    MAX_DESK_VARS,
    BnBConfig,
    DeskScaleError,
    LpStatus,
    brute_force_milp,
    relative_gap,
    simplex,
    solve_lp,
    solve_milp,
)

optimize = pytest.importorskip("scipy.optimize")


def _model(c, rows, bounds, integer=()):
    m = ModelIR()
    for k, (ck, (lo, hi)) in enumerate(zip(c, bounds)):
        m.add_var(f"x{k}", lo, hi, Integrality.INTEGER if k in integer else Integrality.CONTINUOUS,
                  cost=ck)
    for i, (coef, sense, rhs) in enumerate(rows):
        m.add_constr(f"r{i}", [(f"x{k}", a) for k, a in enumerate(coef) if a], sense, rhs)
    return m


def test_textbook_lp():
    # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
    m = _model([-3, -5], [([1, 0], Sense.LE, 4), ([0, 2], Sense.LE, 12), ([3, 2], Sense.LE, 18)],
               [(0, math.inf)] * 2)
    res = solve_lp(m)
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(-36.0)
    np.testing.assert_allclose(res.x, [2.0, 6.0])


def test_equality_with_free_variable():
    # min x + y, x - y = 1, x + y >= 3, y free
    m = _model([1, 1], [([1, -1], Sense.EQ, 1), ([1, 1], Sense.GE, 3)], [(0, 10), (-math.inf, math.inf)])
    res = solve_lp(m)
    assert res.objective == pytest.approx(3.0)
    assert res.x[0] - res.x[1] == pytest.approx(1.0)


def test_infeasible_and_unbounded():
    inf = _model([1], [([1], Sense.GE, 5)], [(0, 2)])
    assert solve_lp(inf).status is LpStatus.INFEASIBLE
    unb = _model([-1, 0], [([1, -1], Sense.LE, 1)], [(0, math.inf), (0, math.inf)])
    assert solve_lp(unb).status is LpStatus.UNBOUNDED


def test_crossed_bounds_are_infeasible():
    assert simplex([1.0], np.zeros((0, 1)), [], [2.0], [1.0]).status is LpStatus.INFEASIBLE


def _random_lp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    m = int(rng.integers(0, 6))
    A = rng.integers(-4, 5, (m, n)).astype(float)
    b = rng.integers(-6, 7, m).astype(float)
    sense = rng.choice(["<=", ">=", "="], m, p=[0.45, 0.45, 0.1])
    lo = np.where(rng.random(n) < 0.2, -np.inf, rng.integers(-3, 2, n).astype(float))
    hi = np.where(rng.random(n) < 0.3, np.inf, lo + rng.integers(0, 6, n))
    hi = np.where(np.isfinite(hi), hi, np.inf)
    c = rng.integers(-5, 6, n).astype(float)
    return c, A, b, sense, lo, hi


def _scipy_lp(c, A, b, sense, lo, hi):
    A_ub = np.vstack([A[sense == "<="], -A[sense == ">="]])
    b_ub = np.concatenate([b[sense == "<="], -b[sense == ">="]])
    A_eq, b_eq = A[sense == "="], b[sense == "="]
    kw = {}
    if A_ub.size:
        kw.update(A_ub=A_ub, b_ub=b_ub)
    if A_eq.size:
        kw.update(A_eq=A_eq, b_eq=b_eq)
    bounds = [(None if math.isinf(l) else l, None if math.isinf(h) else h) for l, h in zip(lo, hi)]
    # presolve first off (on, it has reported an unbounded LP as infeasible),
    # then on when the run without it ends with no verdict
    for presolve in (False, True):
        res = optimize.linprog(c, bounds=bounds, method="highs", options={"presolve": presolve}, **kw)
        if res.status in (0, 2, 3):
            break
    return res


@settings(max_examples=150)
@given(st.integers(0, 2**32 - 1))
@example(5562)
@example(914)
def test_simplex_matches_scipy_linprog(seed):
    c, A, b, sense, lo, hi = _random_lp(seed)
    rows = [(A[i], Sense(sense[i]), b[i]) for i in range(len(b))]
    ours = solve_lp(_model(c, rows, list(zip(lo, hi))))
    ref = _scipy_lp(c, A, b, sense, lo, hi)
    assume(ref.status in (0, 2, 3))
    expected = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[ref.status]
    assert ours.status is expected
    if expected is LpStatus.OPTIMAL:
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7 * max(1, abs(ref.fun)))
        x = ours.x
        assert (x >= lo - 1e-9).all() and (x <= hi + 1e-9).all()
        for i in range(len(b)):
            act = A[i] @ x
            assert {"<=": act <= b[i] + 1e-7, ">=": act >= b[i] - 1e-7,
                    "=": abs(act - b[i]) <= 1e-7}[sense[i]]


def _scipy_milp(model):
    form = model.to_arrays()
    cons = []
    for s, lo, hi in (("<=", -np.inf, None), (">=", None, np.inf), ("=", None, None)):
        rows = form.sense == s
        if rows.any():
            b = form.b[rows]
            cons.append(optimize.LinearConstraint(form.A[rows], b if lo is None else lo,
                                                  b if hi is None else hi))
    res = optimize.milp(form.c, constraints=cons, integrality=form.integer.astype(int),
                        bounds=optimize.Bounds(form.lb, form.ub),
                        options={"mip_rel_gap": 1e-10})
    return res.status, (res.fun + form.constant if res.status == 0 else None)


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("kind", formulations.KINDS)
def test_enumeration_and_bnb_match_scipy_milp(seed, kind):
    inst = fixtures.random_small_instance(seed)
    model = formulations.build(kind, inst.net, inst.scenarios, inst.costs)
    status, ref = _scipy_milp(model)
    assert status == 0
    brute = brute_force_milp(model)
    bnb, stats = solve_milp(model, BnBConfig(rel_gap=1e-9))
    tol = 1e-6 * max(1.0, abs(ref))
    assert brute.status is SolveStatus.OPTIMAL
    assert brute.objective_value == pytest.approx(ref, abs=tol)
    assert bnb.objective_value == pytest.approx(ref, abs=tol)
    assert stats.gap <= 1e-9


def test_two_bus_lp_bounds_milp(two_bus):
    model = formulations.build("tnep", two_bus.net, two_bus.scenarios, two_bus.costs)
    lp = solve_lp(model)
    sol, stats = solve_milp(model)
    assert lp.objective <= 1600.0 + 1e-9
    assert sol.objective_value == pytest.approx(1600.0)
    assert stats.bound <= sol.objective_value + 1e-9


def test_all_fixed_integers_need_one_node():
    m = _model([1, 2], [([1, 1], Sense.GE, 2.5)], [(1, 1), (0, 5)], integer={0})
    sol, stats = solve_milp(m)
    assert stats.nodes == 1
    assert sol.objective_value == pytest.approx(1 + 2 * 1.5)


def test_no_integers_enumeration_is_the_lp():
    m = _model([1, 2], [([1, 1], Sense.GE, 2.5)], [(0, 1), (0, 5)])
    assert brute_force_milp(m).objective_value == pytest.approx(solve_lp(m).objective)


def test_integer_infeasible_toy():
    # 2x = 1 has no integer solution
    m = _model([1], [([2], Sense.EQ, 1)], [(0, 3)], integer={0})
    assert solve_lp(m).status is LpStatus.OPTIMAL
    assert solve_milp(m)[0].status is SolveStatus.INFEASIBLE
    assert brute_force_milp(m).status is SolveStatus.INFEASIBLE


def test_knapsack_against_enumeration():
    # max 5a + 4b + 3c, 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, integers in [0, 3]
    rows = [([2, 3, 1], Sense.LE, 5), ([4, 1, 2], Sense.LE, 11), ([3, 4, 2], Sense.LE, 8)]
    m = _model([-5, -4, -3], rows, [(0, 3)] * 3, integer={0, 1, 2})
    best = min(-5 * a - 4 * b - 3 * c
               for a in range(4) for b in range(4) for c in range(4)
               if all(np.dot(r[0], (a, b, c)) <= r[2] for r in rows))
    assert brute_force_milp(m).objective_value == pytest.approx(best)
    assert solve_milp(m, BnBConfig(rel_gap=0.0))[0].objective_value == pytest.approx(best)


def test_enumeration_refuses_many_integers():
    m = _model([1] * 21, [], [(0, 1)] * 21, integer=set(range(21)))
    with pytest.raises(ValueError, match="enumeration limit"):
        brute_force_milp(m)
    unbounded_int = _model([1], [], [(0, math.inf)], integer={0})
    with pytest.raises(ValueError, match="finite bounds"):
        brute_force_milp(unbounded_int)


def test_desk_scale_limit():
    m = _model([1.0] * (MAX_DESK_VARS + 1), [], [(0, 1)] * (MAX_DESK_VARS + 1))
    with pytest.raises(DeskScaleError):
        solve_lp(m)


def test_bnb_is_deterministic():
    inst = fixtures.random_small_instance(5)
    model = formulations.build("facets", inst.net, inst.scenarios, inst.costs)
    a, sa = solve_milp(model, BnBConfig(rel_gap=1e-9))
    b, sb = solve_milp(model, BnBConfig(rel_gap=1e-9))
    assert sa.nodes == sb.nodes and a.values == b.values


def test_node_limit_reports_limit_and_consistent_gap():
    rows = [([2, 3, 1], Sense.LE, 5.5), ([3, 4, 2], Sense.LE, 8.5)]
    m = _model([-5, -4, -3], rows, [(0, 3)] * 3, integer={0, 1, 2})
    sol, stats = solve_milp(m, BnBConfig(rel_gap=0.0, node_limit=1))
    assert stats.nodes == 1
    assert sol.status in (SolveStatus.LIMIT, SolveStatus.INFEASIBLE)
    if math.isfinite(stats.incumbent):
        assert stats.gap == pytest.approx(relative_gap(stats.incumbent, stats.bound))


def test_relative_gap():
    assert relative_gap(math.inf, 0.0) == math.inf
    assert relative_gap(100.0, 90.0) == pytest.approx(0.1)
    assert relative_gap(0.5, 0.0) == pytest.approx(0.5)
    assert relative_gap(10.0, 11.0) == 0.0
    with pytest.raises(ValueError):
        BnBConfig(rel_gap=-1.0)
