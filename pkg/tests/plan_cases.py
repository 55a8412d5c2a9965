"""Small planner instances shared by the planner and acceptance tests."""
import numpy as np

from rhcover.agent import AgentState, CameraIntrinsics, GimbalSet, KinematicParams
from rhcover.geometry import gaussian_heightfield_mesh, hull_from_points, mesh_from_triangles
from rhcover.milp import LinExpr, solve
from rhcover.planner import CoverageMap, Obstacle, PlanInputs, build_milp
from rhcover.visibility import GridDecomposition, VisibilityLearningConfig, VisibilityTable

GRID = GridDecomposition((0, 0, 0), (100, 100, 100), (5, 5, 5))
CAM = CameraIntrinsics()
PARAMS = KinematicParams()
GIMBAL = GimbalSet.from_degrees((30, 90, 150), (30, 105, 180, 255, 330))


def desk_mesh():
    return gaussian_heightfield_mesh(40, (45, 45), (80, 80), (6, 7), ((20, 70), (20, 70)))


def open_table(mesh, grid=GRID, rho=None):
    """A table where every cell sees every facet unless ``rho`` says otherwise."""
    if rho is None:
        rho = np.ones((grid.n_cells, len(mesh)), dtype=np.uint8)
    return VisibilityTable(rho, grid.dims, VisibilityLearningConfig(1, 1), bytes(32))


def inputs(states, mesh, table=None, **kw):
    kw.setdefault("gimbal", GIMBAL)
    return PlanInputs(
        states=[s if isinstance(s, AgentState) else AgentState.at(*s) for s in states],
        coverage=kw.pop("coverage", CoverageMap(len(mesh))),
        table=table if table is not None else open_table(mesh),
        grid=kw.pop("grid", GRID),
        mesh=mesh,
        cam=CAM,
        params=PARAMS,
        **kw,
    )


def max_b(p, xi, tau, mesh, tighten):
    """Largest value the hull indicator b can take for a pose fixed at ``p``."""
    inp = inputs([(p, (0, 0, 0))], mesh, horizon=1, targets=[tau], tighten=tighten)
    m, dm = build_milp(inp)
    blk = [b for b in dm.blocks if b.xi == xi and b.tau == tau]
    if not blk:
        return 0.0
    m.fix(int(dm.nu[0, 0, xi - 1]), 1.0)
    m.minimize(-1.0 * LinExpr({blk[0].b: 1.0}))
    r = solve(m, backend="highs")
    return r.assignment[blk[0].b]


def far_triangle():
    return mesh_from_triangles(np.array([[[1, 1, 0], [3, 1, 0], [1, 3, 0]]], dtype=float), (2, 2, 5))


def obstacle_feasible(target, start, points, tighten):
    """Whether the planner lets the agent sit at ``target`` on the second step."""
    mesh = far_triangle()
    obs = [Obstacle(hull_from_points(points), 1)]
    inp = inputs([(start, (0, 0, 0))], mesh, horizon=2, obstacles=obs, tighten=tighten)
    m, dm = build_milp(inp)
    for a in range(3):
        m.fix(int(dm.x[0, 1, a]), float(target[a]))
    m.minimize(LinExpr())
    return solve(m, backend="highs").has_solution
