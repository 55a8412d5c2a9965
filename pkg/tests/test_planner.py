import numpy as np
import pytest

from plan_cases import (
    GRID,
    PARAMS,
    desk_mesh,
    far_triangle,
    inputs,
    max_b,
    obstacle_feasible,
)
from rhcover.agent import AgentState, GimbalSet, step
from rhcover.errors import NoTargetRemaining, PlanInfeasible
from rhcover.geometry import hull_from_fov, hull_from_points, mesh_from_triangles, point_in_hull
from rhcover.milp import Budget, Status, export_lp_text, solve
from rhcover.planner import (
    CoverageMap,
    Obstacle,
    brake_hint,
    build_milp,
    nearest_unobserved_facet,
    plan_objective,
    plan_step,
    reachable_boxes,
)

MESH = desk_mesh()


def _hull_cases(rng, n):
    out = []
    hulls = [hull_from_fov(f.rotated) for f in inputs([((50, 50, 90), (0, 0, 0))], MESH).fovs]
    while len(out) < n:
        tau = int(rng.integers(1, len(MESH) + 1))
        xi = int(rng.integers(1, 16))
        rot = inputs([((50, 50, 90), (0, 0, 0))], MESH).fovs[xi - 1].rotated
        q = rng.uniform(rot.min(axis=0), rot.max(axis=0))
        p = MESH.centroids[tau - 1] - q
        if not GRID.contains(p):
            continue
        if np.min(np.abs(hulls[xi - 1].margins(q))) < 1e-6:
            continue
        out.append((p, xi, tau, point_in_hull(q, hulls[xi - 1], tol=0.0)))
    return out


@pytest.mark.parametrize("tighten", [False, True])
def test_hull_indicator_matches_geometry(tighten):
    cases = _hull_cases(np.random.default_rng(11), 30)
    assert 0 < sum(c[3] for c in cases) < len(cases)
    for p, xi, tau, inside in cases:
        assert max_b(p, xi, tau, MESH, tighten) == float(inside)


def test_obstacle_rows_match_geometry():
    rng = np.random.default_rng(5)
    center = np.array([50.0, 50.0, 50.0])
    n_in = n_out = 0
    for _ in range(12):
        pts = center + rng.normal(size=(10, 3)) * 2.0
        hull = hull_from_points(pts)
        start = center + 6.0
        target = center + rng.uniform(-3.5, 3.5, 3)
        margin = np.max(hull.margins(target))
        if abs(margin) < 1e-3:
            continue
        inside = margin < 0
        n_in += inside
        n_out += not inside
        for tighten in (False, True):
            assert obstacle_feasible(target, start, pts, tighten) == (not inside)
    assert n_in and n_out


def test_sigma_prefers_early_coverage():
    tri = np.array([[[40, 40, 0], [60, 40, 0], [40, 60, 0]]], dtype=float)
    mesh = mesh_from_triangles(tri, (50, 50, 10))
    down = GimbalSet((0.0,), (0.0,))
    c = mesh.centroids[0]
    inp = inputs([((c[0], c[1], 10.0), (0, 0, 0))], mesh, horizon=2, gimbal=down)
    sol, m, dm = plan_step(inp)
    assert sol.status is Status.OPTIMAL
    assert sol.predicted == [(1, 1, 1)]
    # the same facet can also be taken at the second step, at a worse value
    first = [b for b in dm.blocks if b.kappa == 1][0]
    m.fix(first.bhat, 0.0)
    alt = solve(m)
    assert alt.status is Status.OPTIMAL
    assert alt.assignment[[b.bhat for b in dm.blocks if b.kappa == 2][0]] == 1.0
    assert alt.objective_value > sol.objective


@pytest.mark.parametrize("seed", range(4))
def test_tightening_keeps_the_optimum(seed):
    rng = np.random.default_rng(seed)
    targets = rng.choice(len(MESH), size=3, replace=False) + 1
    c = MESH.centroids[targets[0] - 1]
    p0 = np.clip(c + rng.uniform(-15, 15, 3) + [0, 0, 12], 1, 99)
    if np.max(hull_from_points(MESH.vertices.reshape(-1, 3)).margins(p0)) <= 0:
        p0[2] = 60.0
    v0 = rng.uniform(-3, 3, 3)
    vals = []
    for tighten in (False, True):
        inp = inputs([(p0, v0)], MESH, horizon=2, targets=targets, tighten=tighten)
        sol, _, _ = plan_step(inp, backend="highs")
        assert sol.status is Status.OPTIMAL
        vals.append(sol.objective)
    assert vals[0] == pytest.approx(vals[1], abs=1e-6)


def test_reachable_boxes_contain_rollouts():
    rng = np.random.default_rng(2)
    s0 = AgentState.at((30, 40, 50), (5, -3, 2))
    boxes, _ = reachable_boxes(s0, PARAMS, 4, GRID)
    for _ in range(200):
        s = s0
        for k in range(4):
            # the k-th box holds the position after k + 1 steps
            s = step(s, rng.uniform(-10, 10, 3), PARAMS)
            if not GRID.contains(s.p):
                break
            assert np.all(boxes[k, 0] - 1e-9 <= s.p) and np.all(s.p <= boxes[k, 1] + 1e-9)
            if np.any(np.abs(s.v) > PARAMS.v_bound):
                break


def test_hint_is_feasible_and_plan_resimulates():
    inp = inputs([((20, 20, 60), (3, 0, -2)), ((80, 80, 60), (0, 0, 0))], MESH, horizon=3, targets=[5, 30, 50])
    m, dm = build_milp(inp)
    h = brake_hint(m, dm)
    assert h is not None and m.max_violation(h) <= 1e-7
    sol, m2, dm2 = plan_step(inp)
    assert sol.status is Status.OPTIMAL
    assert plan_objective(solve(m2, backend="highs").assignment, dm2) == pytest.approx(sol.objective, abs=1e-6)
    for j in range(2):
        s = inp.states[j]
        for k in range(3):
            s = step(s, sol.controls[j, k], PARAMS)
            assert sol.states[j, k] == pytest.approx(s.as_vector(), abs=1e-6)


def test_agents_keep_apart():
    mesh = far_triangle()
    inp = inputs([((45, 50, 50), (8, 0, 0)), ((55, 50, 50), (-8, 0, 0))], mesh, horizon=3)
    sol, _, _ = plan_step(inp)
    inr = inp.safety_radius * 0.7946544722917661
    for k in range(3):
        d = sol.states[1, k, :3] - sol.states[0, k, :3]
        assert np.linalg.norm(d) >= inr - 1e-6


def test_planner_model_exports_and_reimports(tmp_path):
    import highspy

    inp = inputs([((30, 30, 60), (0, 0, 0))], MESH, horizon=2, targets=[10, 20])
    m, _ = build_milp(inp)
    path = tmp_path / "p.lp"
    path.write_text(export_lp_text(m))
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve(m, backend="highs").objective_value, abs=1e-6)


def test_unsafe_start_is_infeasible():
    obs = [Obstacle(hull_from_points(np.array([[40, 40, 40], [60, 40, 40], [40, 60, 40], [40, 40, 60], [60, 60, 60]])), 1)]
    inp = inputs([((50, 50, 48), (0, 0, 0))], far_triangle(), horizon=2, obstacles=obs)
    with pytest.raises(PlanInfeasible):
        plan_step(inp)


def test_nothing_left_to_cover():
    cov = CoverageMap(1)
    cov.mark(1)
    with pytest.raises(NoTargetRemaining):
        nearest_unobserved_facet(np.zeros(3), far_triangle(), cov)


def test_time_budget_is_respected():
    import time

    inp = inputs([((20, 20, 60), (0, 0, 0)), ((80, 80, 60), (0, 0, 0))], MESH, horizon=5)
    t0 = time.perf_counter()
    sol, _, _ = plan_step(inp, Budget(max_seconds=3.0))
    assert time.perf_counter() - t0 < 3.5
    assert sol.status in (Status.OPTIMAL, Status.INCUMBENT)
