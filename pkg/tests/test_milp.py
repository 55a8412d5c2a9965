import math

import highspy
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from milp_cases import enumerate_optimum, random_model
from rhcover.errors import ModelError
from rhcover.milp import (
    BINARY,
    Budget,
    LinExpr,
    MilpModel,
    Status,
    add_conjunction,
    export_lp_text,
    solve,
)
from rhcover.milp import simplex


def test_knapsack_pair():
    m = MilpModel()
    x = m.add_var("x", BINARY)
    y = m.add_var("y", BINARY)
    m.add_constraint(x + y, "<=", 1)
    m.minimize(-(3 * x + 2 * y))
    r = solve(m)
    assert r.status is Status.OPTIMAL
    assert r.value(x) == 1.0 and r.value(y) == 0.0
    assert r.objective_value == pytest.approx(-3.0)


def test_empty_model_is_optimal_zero():
    r = solve(MilpModel())
    assert r.status is Status.OPTIMAL
    assert r.objective_value == 0.0


def test_contradictory_bounds_infeasible():
    m = MilpModel()
    x = m.add_var("x", BINARY)
    m.add_constraint(x, ">=", 0.7)
    m.add_constraint(x, "<=", 0.3)
    assert solve(m).status is Status.INFEASIBLE


def test_unbounded_relaxation_is_model_error():
    m = MilpModel()
    x = m.add_var("x", lower=-math.inf, upper=math.inf)
    b = m.add_var("b", BINARY)
    m.add_constraint(x + b, ">=", 0)
    m.minimize(-1.0 * x)
    with pytest.raises(ModelError):
        solve(m)


def test_unregistered_variable_rejected():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_constraint(LinExpr({5: 1.0}), "<=", 1)


@pytest.mark.parametrize("seed", range(40))
def test_bnb_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, int(rng.integers(1, 9)), int(rng.integers(0, 6)), int(rng.integers(1, 7)))
    want = enumerate_optimum(m)
    r = solve(m)
    if math.isinf(want):
        assert r.status is Status.INFEASIBLE
        return
    assert r.status is Status.OPTIMAL
    assert r.objective_value == pytest.approx(want, abs=1e-6)
    assert r.bound <= r.objective_value + 1e-9
    assert m.max_violation(r.assignment) <= 1e-7
    xb = r.assignment[m.is_binary]
    assert np.array_equal(xb, np.round(xb))


@pytest.mark.parametrize("seed", range(10))
def test_highs_backend_agrees(seed):
    rng = np.random.default_rng(1000 + seed)
    m = random_model(rng, 6, 4, 5)
    a, b = solve(m), solve(m, backend="highs")
    assert a.status == b.status
    if a.has_solution:
        assert a.objective_value == pytest.approx(b.objective_value, abs=1e-6)


def test_node_budget_reports_incumbent_or_nothing():
    rng = np.random.default_rng(7)
    m = random_model(rng, 12, 6, 10)
    r = solve(m, Budget(max_nodes=1))
    assert r.status in (Status.OPTIMAL, Status.INCUMBENT, Status.NO_SOLUTION, Status.INFEASIBLE)
    if r.status is Status.INCUMBENT:
        assert r.stats["deterministic"] is False
        assert r.bound <= r.objective_value


# -- simplex ---------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_simplex_against_scipy(seed):
    rng = np.random.default_rng(seed)
    n, mrows = int(rng.integers(1, 7)), int(rng.integers(0, 6))
    A = rng.integers(-4, 5, size=(mrows, n)).astype(float)
    x0 = rng.uniform(-3, 3, n)
    hi = A @ x0 + rng.uniform(0, 2, mrows)
    lo = np.where(rng.random(mrows) < 0.3, A @ x0 - rng.uniform(0, 2, mrows), -np.inf)
    lb = np.full(n, -5.0)
    ub = np.full(n, 5.0)
    c = rng.integers(-5, 6, n).astype(float)
    mine = simplex.solve_lp(c, A, lo, hi, lb, ub)
    fin = np.isfinite(lo)
    ref = linprog(
        c,
        A_ub=np.vstack([A, -A[fin]]) if mrows else None,
        b_ub=np.concatenate([hi, -lo[fin]]) if mrows else None,
        bounds=list(zip(lb, ub)),
        method="highs",
    )
    assert mine.status == simplex.OPTIMAL and ref.status == 0
    assert mine.objective == pytest.approx(ref.fun, abs=1e-7)
    if mrows:
        ax = A @ mine.x
        assert np.all(ax <= hi + 1e-7) and np.all(ax >= lo - 1e-7)
    assert np.all(mine.x >= lb - 1e-7) and np.all(mine.x <= ub + 1e-7)


def test_simplex_equality_and_free_columns():
    # min x + y  s.t. x - y = 1, x free, y >= 0  -> x = 1, y = 0
    r = simplex.solve_lp([1.0, 1.0], [[1.0, -1.0]], [1.0], [1.0], [-np.inf, 0.0], [np.inf, np.inf])
    assert r.status == simplex.OPTIMAL
    assert r.x == pytest.approx([1.0, 0.0])


def test_simplex_degenerate_cycling_example():
    # Beale's classic cycling instance; Dantzig alone may cycle
    c = np.array([-0.75, 150.0, -0.02, 6.0])
    A = np.array([[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]])
    hi = np.array([0.0, 0.0, 1.0])
    r = simplex.solve_lp(c, A, np.full(3, -np.inf), hi, np.zeros(4), np.full(4, np.inf))
    assert r.status == simplex.OPTIMAL
    assert r.objective == pytest.approx(-0.05)


# -- conjunction -----------------------------------------------------------

def _conj_model():
    m = MilpModel()
    out = m.add_var("out", BINARY)
    return m, out


def test_conjunction_all_ones_forces_one():
    m, out = _conj_model()
    add_conjunction(m, out, [1, 1, 1])
    m.minimize(1.0 * out)
    r = solve(m)
    assert r.value(out) == 1.0


def test_conjunction_constant_zero_forces_zero():
    m, out = _conj_model()
    a = m.add_var("a", BINARY)
    add_conjunction(m, out, [a, 0])
    m.minimize(-1.0 * out)
    assert solve(m).value(out) == 0.0


@pytest.mark.parametrize("a_val,b_val", [(0, 0), (0, 1), (1, 0), (1, 1)])
@pytest.mark.parametrize("direction", [1.0, -1.0])
def test_conjunction_truth_table(a_val, b_val, direction):
    m, out = _conj_model()
    a = m.add_var("a", BINARY)
    b = m.add_var("b", BINARY)
    add_conjunction(m, out, [a, b])
    m.fix(a, a_val)
    m.fix(b, b_val)
    # push the output both ways; only the AND value is feasible
    m.minimize(direction * out)
    assert solve(m).value(out) == float(a_val and b_val)


# -- LP export -------------------------------------------------------------

def test_export_single_binary():
    m = MilpModel("one")
    x = m.add_var("x", BINARY)
    m.minimize(1.0 * x)
    text = export_lp_text(m)
    assert "Binaries\n x\n" in text
    assert text.startswith("\\ one\nMinimize\n")


def test_export_is_deterministic():
    rng = np.random.default_rng(3)
    m = random_model(rng, 5, 3, 4)
    assert export_lp_text(m) == export_lp_text(m)
    m2 = random_model(np.random.default_rng(3), 5, 3, 4)
    assert export_lp_text(m2) == export_lp_text(m)


def _solve_lp_file(text, tmp_path):
    path = tmp_path / "model.lp"
    path.write_text(text)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    if h.getModelStatus() == highspy.HighsModelStatus.kInfeasible:
        return math.inf
    assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
    return h.getInfo().objective_function_value


def test_export_reimport_matches_solver(tmp_path):
    for seed in range(20):
        m = random_model(np.random.default_rng(500 + seed), 5, 4, 5)
        r = solve(m)
        ext = _solve_lp_file(export_lp_text(m), tmp_path)
        if r.status is Status.INFEASIBLE:
            assert math.isinf(ext)
        else:
            assert ext == pytest.approx(r.objective_value, abs=1e-6)


def test_export_names_are_sanitized(tmp_path):
    m = MilpModel()
    a = m.add_var("x[1,2]", lower=-math.inf, upper=math.inf)
    b = m.add_var("2bad", BINARY)
    m.add_constraint(a - b, ">=", -3.5, "row[j=1,k=2]")
    m.minimize(a + b)
    text = export_lp_text(m)
    assert "x_1_2 free" in text
    assert " row_j_1_k_2:" in text
    assert _solve_lp_file(text, tmp_path) == pytest.approx(-3.5)
