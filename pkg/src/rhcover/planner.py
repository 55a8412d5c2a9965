"""One receding-horizon step as a mixed-integer program.

For every agent ``j`` and look-ahead step ``kappa`` the model holds the
kinematic state and input, one binary per gimbal configuration (exactly one
active), and for every (facet, configuration) pair that can still matter:

* five face indicators ``o`` and a membership indicator ``b`` encoding
  "facet centroid lies inside the anchored FOV pyramid" with big-M rows
  written relative to the agent position,
* ``bbar`` = configuration active AND facet in FOV AND the occupied grid cell
  sees the facet according to the learned table,
* ``bhat`` <= ``bbar`` + coverage flag, with at most one ``bhat`` per facet.

Cell occupancy uses one binary per candidate cell. Obstacles and the pairwise
safety dodecahedra are disjunctions over their faces.

Indices exposed to callers (agents, steps, facets, configurations, cells)
are 1-based; arrays are 0-based.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .agent import AgentState, CameraIntrinsics, GimbalSet, KinematicParams, precompute_fovs, step
from .errors import DecodeError, ModelError, NoTargetRemaining, PlanInfeasible, PlanInfeasibleHint
from .geometry import DODECAHEDRON_NORMALS, DODECAHEDRON_RADIUS_RATIO, ConvexHullH, Mesh, hull_from_fov
from .milp import BINARY, Budget, LinExpr, MilpModel, SolveResult, Status, solve
from .visibility import GridDecomposition, VisibilityTable

STRICT_EPS = 1e-4  # margin standing in for a strict inequality
SLACK = 1.0  # added to every tightened big-M constant
SOLVE_RESERVE = 0.1  # fraction of the step budget kept back from the solver


@dataclass(frozen=True)
class Obstacle:
    hull: ConvexHullH
    index: int = 1


class CoverageMap:
    """Binary per-facet record of coverage; entries only ever go from 0 to 1."""

    def __init__(self, n_facets: int, q=None):
        self.q = np.zeros(n_facets, dtype=np.uint8) if q is None else np.asarray(q, dtype=np.uint8).copy()
        if self.q.shape != (n_facets,) or np.any(self.q > 1):
            raise ValueError("coverage map must be a 0/1 vector over the facets")

    def __len__(self):
        return len(self.q)

    def covered(self, tau_hat: int) -> bool:
        return bool(self.q[tau_hat - 1])

    def mark(self, tau_hat: int) -> None:
        self.q[tau_hat - 1] = 1

    def copy(self) -> "CoverageMap":
        return CoverageMap(len(self.q), self.q)


@dataclass
class PlanInputs:
    states: list[AgentState]
    coverage: CoverageMap
    table: VisibilityTable
    grid: GridDecomposition
    mesh: Mesh
    gimbal: GimbalSet
    cam: CameraIntrinsics
    params: KinematicParams
    horizon: int = 5
    obstacles: list[Obstacle] = field(default_factory=list)
    safety_radius: float = 2.0
    big_m: float | None = None
    w_d: float | None = None
    targets: np.ndarray | None = None  # 1-based facet indices; None means all
    tighten: bool = True
    include_covered: bool = False
    d_step: int | None = None  # horizon step carrying the distance term
    fovs: list | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.fovs is None:
            self.fovs = precompute_fovs(self.gimbal, self.cam)
        if self.targets is None:
            self.targets = np.arange(1, len(self.mesh) + 1)
        self.targets = np.asarray(sorted(set(int(t) for t in self.targets)), dtype=int)
        diam = float(np.linalg.norm(np.array(self.grid.upper) - np.array(self.grid.lower)))
        if self.big_m is None:
            self.big_m = 10.0 * diam
        if self.big_m <= diam:
            raise ValueError("big_m must exceed the environment diameter")
        if self.w_d is None:
            # keeps the distance term below the reward of one facet at the last step
            self.w_d = 1.0 / float(np.sum(np.array(self.grid.upper) - np.array(self.grid.lower)))
        if self.d_step is None:
            self.d_step = min(2, self.horizon)
        if not 1 <= self.d_step <= self.horizon:
            raise ValueError("d_step must lie in 1..horizon")

    @property
    def n_agents(self) -> int:
        return len(self.states)

    def sigma(self, kappa: int) -> float:
        return float(self.horizon - kappa + 1)


@dataclass
class CoverBlock:
    """Variables of one (agent, facet, configuration, step) coverage block (1-based labels)."""

    agent: int
    tau: int
    xi: int
    kappa: int
    o: np.ndarray
    b: int
    bbar: int
    bhat: int


@dataclass
class DecodeMap:
    inputs: PlanInputs
    x: np.ndarray  # (N, K, 6) variable ids
    u: np.ndarray  # (N, K, 3)
    nu: np.ndarray  # (N, K, |Xi|)
    rt: dict  # (j, kappa) -> {cell: id}
    blocks: list[CoverBlock]
    obstacle_rows: list  # (j, kappa, psi, faces, ids)
    pair_rows: list  # (i, j, kappa, faces, ids)
    d_aux: np.ndarray  # (N, 3)
    d_targets: list  # tau* per agent, or None
    boxes: list  # per agent: (K, 2, 3) reachable position boxes
    build_time: float = 0.0


@dataclass
class PlanSolution:
    controls: np.ndarray  # (N, K, 3)
    xi: np.ndarray  # (N, K) 1-based configuration
    states: np.ndarray  # (N, K, 6) re-simulated predicted states
    predicted: list  # (agent, tau, kappa), 1-based
    status: Status
    objective: float
    bound: float
    stats: dict
    d_targets: list

    def first_controls(self) -> np.ndarray:
        return self.controls[:, 0, :]


def nearest_unobserved_facet(p, mesh: Mesh, coverage: CoverageMap, targets=None) -> int:
    """1-based index of the closest uncovered facet centroid (lowest index on ties)."""
    cand = np.nonzero(coverage.q == 0)[0]
    if targets is not None:
        cand = np.intersect1d(cand, np.asarray(targets, dtype=int) - 1)
    if cand.size == 0:
        raise NoTargetRemaining("every target facet is already covered")
    d = np.linalg.norm(mesh.centroids[cand] - np.asarray(p, dtype=float), axis=1)
    return int(cand[int(np.argmin(d))]) + 1


def reachable_boxes(state: AgentState, params: KinematicParams, horizon: int, grid: GridDecomposition):
    """Per-step axis-aligned position boxes ``(K, 2, 3)`` and velocity boxes containing every feasible plan."""
    lo_env, hi_env = np.array(grid.lower), np.array(grid.upper)
    plo = phi = np.asarray(state.p, dtype=float)
    vlo = vhi = np.asarray(state.v, dtype=float)
    dv = params.dt / params.mass * params.u_bound
    pos, vel = [], []
    for _ in range(horizon):
        plo, phi = plo + params.dt * vlo, phi + params.dt * vhi
        plo, phi = np.maximum(plo, lo_env), np.minimum(phi, hi_env)
        a = 1.0 - params.gamma
        vlo, vhi = np.maximum(a * vlo - dv, -params.v_bound), np.minimum(a * vhi + dv, params.v_bound)
        pos.append((plo.copy(), phi.copy()))
        vel.append((vlo.copy(), vhi.copy()))
    return np.array(pos), np.array(vel)


def _box_max(normals, lo, hi):
    """max of ``normals @ p`` over the box, one value per row."""
    return np.sum(np.maximum(normals * lo, normals * hi), axis=-1)


def _box_min(normals, lo, hi):
    return np.sum(np.minimum(normals * lo, normals * hi), axis=-1)


def _origin_hulls(fovs):
    hulls = [hull_from_fov(f.rotated) for f in fovs]
    return np.stack([h.normals for h in hulls]), np.stack([h.offsets for h in hulls])


class _Rows:
    """Collects equal-width row groups before handing them to the model."""

    def __init__(self, model: MilpModel):
        self.model = model

    def add(self, cols, vals, sense, rhs, tag):
        cols = np.asarray(cols)
        if cols.size == 0 and np.size(rhs) == 0:
            return
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        tags = [tag] * len(rhs) if isinstance(tag, str) else tag
        self.model.add_rows(cols, vals, sense, rhs, tags)

    def ragged(self, rows, sense, rhs, tags, pad_col):
        """Rows of varying width, zero-padded to a common width."""
        if not rows:
            return
        width = max(1, max(len(c) for c, _ in rows))
        cols = np.full((len(rows), width), pad_col, dtype=np.int64)
        vals = np.zeros((len(rows), width))
        for i, (c, v) in enumerate(rows):
            cols[i, : len(c)] = c
            vals[i, : len(v)] = v
        self.add(cols, vals, sense, rhs, tags)


def build_milp(inputs: PlanInputs) -> tuple[MilpModel, DecodeMap]:
    t0 = time.perf_counter()
    N, K = inputs.n_agents, inputs.horizon
    mesh, grid, table = inputs.mesh, inputs.grid, inputs.table
    n_xi = len(inputs.fovs)
    if table.rho.shape != (grid.n_cells, len(mesh)):
        raise ModelError("visibility table does not match the grid and mesh")
    A, B = inputs.params.matrices()
    vb, ub = inputs.params.v_bound, inputs.params.u_bound
    env_lo, env_hi = np.array(grid.lower), np.array(grid.upper)
    bigM = inputs.big_m
    tighten = inputs.tighten

    q = inputs.coverage.q
    tgt = inputs.targets - 1
    facets = tgt if inputs.include_covered else tgt[q[tgt] == 0]
    cents = mesh.centroids
    alpha0, beta0 = _origin_hulls(inputs.fovs)  # (X, 5, 3), (X, 5)

    m = MilpModel("coverage_step")
    rows = _Rows(m)
    boxes = []
    vboxes = []
    for j in range(N):
        pb, vbx = reachable_boxes(inputs.states[j], inputs.params, K, grid)
        boxes.append(pb)
        vboxes.append(vbx)

    # kinematic state and inputs -----------------------------------------
    X = np.zeros((N, K, 6), dtype=np.int64)
    U = np.zeros((N, K, 3), dtype=np.int64)
    for j in range(N):
        for k in range(K):
            lab = f"{j + 1}_{k + 1}"
            if tighten:
                plo, phi = boxes[j][k]
                vlo, vhi = vboxes[j][k]
                if np.any(plo > phi + 1e-9):
                    raise PlanInfeasibleHint(f"agent {j + 1} cannot stay inside the environment at step {k + 1}")
                phi = np.maximum(phi, plo)
            else:
                plo, phi = env_lo, env_hi
                vlo, vhi = np.full(3, -vb), np.full(3, vb)
            X[j, k, :3] = m.add_vars([f"p{a}_{lab}" for a in "xyz"], lower=plo, upper=phi)
            X[j, k, 3:] = m.add_vars([f"v{a}_{lab}" for a in "xyz"], lower=vlo, upper=vhi)
            U[j, k] = m.add_vars([f"u{a}_{lab}" for a in "xyz"], lower=-ub, upper=ub)
    for j in range(N):
        x0 = inputs.states[j].as_vector()
        for k in range(K):
            # x_k - A x_{k-1} - B u_k = 0
            cols, vals = [], []
            for r in range(6):
                c = [X[j, k, r]] + [U[j, k, a] for a in range(3)]
                v = [1.0] + [-B[r, a] for a in range(3)]
                if k > 0:
                    c += list(X[j, k - 1])
                    v += list(-A[r])
                cols.append(c)
                vals.append(v)
            rhs = A @ x0 if k == 0 else np.zeros(6)
            rows.add(cols, vals, "==", rhs, f"dynamics[j={j + 1},k={k + 1}]")

    # gimbal configuration ------------------------------------------------
    NU = np.zeros((N, K, n_xi), dtype=np.int64)
    for j in range(N):
        for k in range(K):
            NU[j, k] = m.add_vars([f"nu_{j + 1}_{xi + 1}_{k + 1}" for xi in range(n_xi)], BINARY)
            rows.add([NU[j, k]], [np.ones(n_xi)], "==", [1.0], f"one_config[j={j + 1},k={k + 1}]")

    # occupied cell ---------------------------------------------------------
    RT = {}
    cand_cells = {}
    for j in range(N):
        for k in range(K):
            plo, phi = boxes[j][k]
            cells = grid.cells_overlapping(plo, phi) if np.all(plo <= phi + 1e-9) else []
            if not tighten and k > 0:
                cells = list(range(1, grid.n_cells + 1))
            if not cells:
                raise PlanInfeasibleHint(f"agent {j + 1} has no reachable grid cell at step {k + 1}")
            ids = m.add_vars([f"rt_{j + 1}_{c}_{k + 1}" for c in cells], BINARY)
            RT[(j + 1, k + 1)] = dict(zip(cells, ids.tolist()))
            cand_cells[(j, k)] = np.array(cells)
            lab = f"[j={j + 1},k={k + 1}]"
            rows.add([ids], [np.ones(len(ids))], "==", [1.0], "one_cell" + lab)
            blo = np.array([grid.cell_box(c)[0] for c in cells])
            bhi = np.array([grid.cell_box(c)[1] for c in cells])
            for a in range(3):
                pid = X[j, k, a]
                lo_b, hi_b = m.bounds(pid)
                # rt = 1  =>  cell_lo <= p <= cell_hi
                need_lo = blo[:, a] - lo_b
                need_hi = hi_b - bhi[:, a]
                if tighten:
                    sel = np.nonzero(need_lo > 0)[0]
                    M = need_lo[sel] + SLACK
                else:
                    sel = np.arange(len(cells))
                    M = np.full(len(sel), bigM)
                if sel.size:
                    rows.add(
                        np.stack([np.full(sel.size, pid), ids[sel]], 1),
                        np.stack([np.ones(sel.size), -M], 1),
                        ">=",
                        blo[sel, a] - M,
                        "cell_lo" + lab,
                    )
                if tighten:
                    sel = np.nonzero(need_hi > 0)[0]
                    M = need_hi[sel] + SLACK
                else:
                    sel = np.arange(len(cells))
                    M = np.full(len(sel), bigM)
                if sel.size:
                    rows.add(
                        np.stack([np.full(sel.size, pid), ids[sel]], 1),
                        np.stack([np.ones(sel.size), M], 1),
                        "<=",
                        bhi[sel, a] + M,
                        "cell_hi" + lab,
                    )

    # coverage blocks -------------------------------------------------------
    blocks: list[CoverBlock] = []
    per_facet_bhat: dict[int, list[int]] = {}
    for j in range(N):
        for k in range(K):
            plo, phi = boxes[j][k]
            cells = cand_cells[(j, k)]
            rho_sub = table.rho[cells - 1][:, facets] if facets.size else np.zeros((len(cells), 0), np.uint8)
            if tighten and not len(cells):
                continue  # nothing can be seen from outside the grid
            pvars = X[j, k, :3]
            cell_ids = np.array([RT[(j + 1, k + 1)][c] for c in cells])
            if tighten and len(cells):
                cb = np.array([grid.cell_box(int(c)) for c in cells])  # (C, 2, 3)
                clo, chi = np.maximum(cb[:, 0], plo), np.minimum(cb[:, 1], phi)
                cell_ok = np.all(clo <= chi + 1e-9, axis=1)
                chi = np.maximum(chi, clo)
            for xi in range(n_xi):
                al, be = alpha0[xi], beta0[xi]  # (5, 3), (5,)
                ac = cents[facets] @ al.T  # (F, 5)
                # alpha.(c - p) over the box
                lo_val = ac - _box_max(al, plo, phi)
                hi_val = ac - _box_min(al, plo, phi)
                if tighten:
                    # some seeing cell, clipped to the box, must pass every face test
                    cmax = _box_max(al[None], clo[:, None], chi[:, None])  # (C, 5)
                    ok = np.all(ac[None, :, :] - cmax[:, None, :] <= be + 1e-9, axis=2)  # (C, F)
                    # the anchor must also lie in the axis extent of c - FOV
                    V = inputs.fovs[xi].rotated
                    ext_lo = cents[facets] - V.max(axis=0)  # (F, 3)
                    ext_hi = cents[facets] - V.min(axis=0)
                    ok &= np.all(
                        (ext_lo[None] <= chi[:, None] + 1e-9) & (ext_hi[None] >= clo[:, None] - 1e-9), axis=2
                    )
                    sees = (rho_sub == 1) & ok & cell_ok[:, None]
                    keep = sees.any(axis=0) & np.all(lo_val <= be + 1e-9, axis=1)
                else:
                    sees = rho_sub == 1
                    keep = np.ones(len(facets), dtype=bool)
                sel = np.nonzero(keep)[0]
                if sel.size == 0:
                    continue
                nb = sel.size
                lab = [f"{j + 1}_{facets[s] + 1}_{xi + 1}_{k + 1}" for s in sel]
                o_ids = m.add_vars([f"o_{n + 1}_{l}" for l in lab for n in range(5)], BINARY).reshape(nb, 5)
                b_ids = m.add_vars([f"b_{l}" for l in lab], BINARY)
                bb_ids = m.add_vars([f"bbar_{l}" for l in lab], BINARY)
                bh_ids = m.add_vars([f"bhat_{l}" for l in lab], BINARY)
                if tighten:
                    Mn = np.maximum(hi_val[sel], be[None, :]) + SLACK  # (nb, 5)
                else:
                    Mn = np.full((nb, 5), bigM)
                    if np.any(hi_val[sel] > bigM):
                        raise ModelError("big_m is too small for the FOV rows")
                tagk = f"[j={j + 1},xi={xi + 1},k={k + 1}]"
                # alpha.(c - p) + o (M - beta) <= M
                cols = np.concatenate([o_ids.reshape(-1, 1), np.tile(pvars, (nb * 5, 1))], axis=1)
                vals = np.concatenate(
                    [(Mn - be[None, :]).reshape(-1, 1), np.tile(-al, (nb, 1))], axis=1
                )
                rhs = (Mn - ac[sel]).reshape(-1)
                rows.add(cols, vals, "<=", rhs, "fov_face" + tagk)
                # 5 b <= sum o
                rows.add(
                    np.concatenate([b_ids[:, None], o_ids], 1),
                    np.concatenate([np.full((nb, 1), 5.0), -np.ones((nb, 5))], 1),
                    "<=",
                    np.zeros(nb),
                    "fov_all" + tagk,
                )
                # bbar = nu AND b AND (occupied cell sees the facet)
                nu_id = NU[j, k, xi]
                rows.add(np.stack([bb_ids, np.full(nb, nu_id)], 1), np.tile([1.0, -1.0], (nb, 1)), "<=", np.zeros(nb), "and_nu" + tagk)
                rows.add(np.stack([bb_ids, b_ids], 1), np.tile([1.0, -1.0], (nb, 1)), "<=", np.zeros(nb), "and_b" + tagk)
                le, ge = [], []
                for r, s in enumerate(sel):
                    seen = cell_ids[sees[:, s]]
                    le.append(([bb_ids[r], *seen], [1.0, *([-1.0] * len(seen))]))
                    ge.append(([bb_ids[r], nu_id, b_ids[r], *seen], [1.0, -1.0, -1.0, *([-1.0] * len(seen))]))
                rows.ragged(le, "<=", np.zeros(nb), "and_vis" + tagk, bb_ids[0])
                rows.ragged(ge, ">=", np.full(nb, -2.0), "and_all" + tagk, bb_ids[0])
                # bhat <= bbar + Q
                rows.add(np.stack([bh_ids, bb_ids], 1), np.tile([1.0, -1.0], (nb, 1)), "<=", q[facets[sel]].astype(float), "no_dup" + tagk)
                for r, s in enumerate(sel):
                    t = int(facets[s])
                    blocks.append(CoverBlock(j + 1, t + 1, xi + 1, k + 1, o_ids[r], int(b_ids[r]), int(bb_ids[r]), int(bh_ids[r])))
                    per_facet_bhat.setdefault(t, []).append(int(bh_ids[r]))
    for t in sorted(per_facet_bhat):
        ids = per_facet_bhat[t]
        rows.add([ids], [np.ones(len(ids))], "<=", [1.0], f"once[tau={t + 1}]")

    # obstacles -------------------------------------------------------------
    obstacle_rows = []
    for j in range(N):
        for k in range(K):
            plo, phi = boxes[j][k]
            pvars = X[j, k, :3]
            for obs in inputs.obstacles:
                al, be = obs.hull.normals, obs.hull.offsets + STRICT_EPS
                lo_v = _box_min(al, plo, phi)
                hi_v = _box_max(al, plo, phi)
                tag = f"avoid[j={j + 1},psi={obs.index},k={k + 1}]"
                if np.all(phi - plo <= 0.0):
                    # committed position: only the closed obstacle is forbidden
                    if np.max(al @ plo - obs.hull.offsets) > 0.0:
                        continue
                    m.add_constraint(0.0, ">=", 1.0, tag)
                    obstacle_rows.append((j + 1, k + 1, obs.index, np.zeros(0, int), np.zeros(0, np.int64)))
                    continue
                if tighten:
                    if np.any(lo_v >= be):
                        continue  # always outside this obstacle
                    faces = np.nonzero(hi_v >= be)[0]
                    M = be[faces] - lo_v[faces] + SLACK
                else:
                    faces = np.arange(len(be))
                    M = np.full(len(faces), bigM)
                    if np.any(be - lo_v > bigM):
                        raise ModelError("big_m is too small for the obstacle rows")
                if faces.size == 0:
                    m.add_constraint(0.0, ">=", 1.0, tag)  # no face can be left: infeasible
                    obstacle_rows.append((j + 1, k + 1, obs.index, faces, np.zeros(0, np.int64)))
                    continue
                z = m.add_vars([f"zo_{j + 1}_{obs.index}_{f + 1}_{k + 1}" for f in faces], BINARY)
                # alpha.p + M z >= beta + eps
                rows.add(
                    np.concatenate([np.tile(pvars, (faces.size, 1)), z[:, None]], 1),
                    np.concatenate([al[faces], M[:, None]], 1),
                    ">=",
                    be[faces],
                    tag,
                )
                rows.add([z], [np.ones(z.size)], "<=", [z.size - 1.0], tag + "_any")
                obstacle_rows.append((j + 1, k + 1, obs.index, faces, z))

    # pairwise safety -------------------------------------------------------
    pair_rows = []
    if N > 1:
        al = DODECAHEDRON_NORMALS
        be = np.full(len(al), inputs.safety_radius * DODECAHEDRON_RADIUS_RATIO + STRICT_EPS)
        for i in range(N):
            for j in range(i + 1, N):
                for k in range(K):
                    dlo = boxes[j][k][0] - boxes[i][k][1]
                    dhi = boxes[j][k][1] - boxes[i][k][0]
                    if not tighten:
                        dlo, dhi = env_lo - env_hi, env_hi - env_lo
                    lo_v, hi_v = _box_min(al, dlo, dhi), _box_max(al, dlo, dhi)
                    tag = f"separate[i={i + 1},j={j + 1},k={k + 1}]"
                    if np.all(dhi - dlo <= 0.0):
                        if np.max(al @ dlo) > be[0] - STRICT_EPS:
                            continue
                        m.add_constraint(0.0, ">=", 1.0, tag)
                        pair_rows.append((i + 1, j + 1, k + 1, np.zeros(0, int), np.zeros(0, np.int64)))
                        continue
                    if tighten:
                        if np.any(lo_v >= be):
                            continue
                        faces = np.nonzero(hi_v >= be)[0]
                        M = be[faces] - lo_v[faces] + SLACK
                    else:
                        faces = np.arange(len(be))
                        M = np.full(len(faces), bigM)
                    if faces.size == 0:
                        m.add_constraint(0.0, ">=", 1.0, tag)
                        pair_rows.append((i + 1, j + 1, k + 1, faces, np.zeros(0, np.int64)))
                        continue
                    z = m.add_vars([f"za_{i + 1}_{j + 1}_{f + 1}_{k + 1}" for f in faces], BINARY)
                    pj, pi = X[j, k, :3], X[i, k, :3]
                    rows.add(
                        np.concatenate([np.tile(pj, (faces.size, 1)), np.tile(pi, (faces.size, 1)), z[:, None]], 1),
                        np.concatenate([al[faces], -al[faces], M[:, None]], 1),
                        ">=",
                        be[faces],
                        tag,
                    )
                    rows.add([z], [np.ones(z.size)], "<=", [z.size - 1.0], tag + "_any")
                    pair_rows.append((i + 1, j + 1, k + 1, faces, z))

    # objective -------------------------------------------------------------
    terms: dict[int, float] = {}
    D = np.zeros((N, 3), dtype=np.int64)
    d_targets = []
    kd = inputs.d_step - 1
    uncovered = np.any(q[tgt] == 0) if tgt.size else False
    for j in range(N):
        if not uncovered:
            d_targets.append(None)
            continue
        tau_star = nearest_unobserved_facet(inputs.states[j].p, mesh, inputs.coverage, inputs.targets)
        d_targets.append(tau_star)
        c = cents[tau_star - 1]
        D[j] = m.add_vars([f"dist{a}_{j + 1}" for a in "xyz"], lower=0.0)
        for a in range(3):
            p = X[j, kd, a]
            # d >= |p - c|
            rows.add([[D[j, a], p]], [[1.0, -1.0]], ">=", [-c[a]], f"dist_pos[j={j + 1}]")
            rows.add([[D[j, a], p]], [[1.0, 1.0]], ">=", [c[a]], f"dist_neg[j={j + 1}]")
            terms[int(D[j, a])] = inputs.w_d
    for blk in blocks:
        terms[blk.bhat] = terms.get(blk.bhat, 0.0) - inputs.sigma(blk.kappa)
    m.minimize(LinExpr(terms))
    dm = DecodeMap(inputs, X, U, NU, RT, blocks, obstacle_rows, pair_rows, D, d_targets, boxes)
    dm.build_time = time.perf_counter() - t0
    return m, dm


def brake_hint(model: MilpModel, dm: DecodeMap) -> np.ndarray | None:
    """A feasible assignment in which every agent brakes and covers nothing, if one exists."""
    inp = dm.inputs
    prm = inp.params
    x = np.zeros(model.n_vars)
    lb, ubd = np.array(model.arrays().lb), np.array(model.arrays().ub)
    x[:] = np.clip(0.0, lb, ubd)
    grid = inp.grid
    pos = np.zeros((inp.n_agents, inp.horizon, 3))
    for j, s in enumerate(inp.states):
        for k in range(inp.horizon):
            u = np.clip(-(1.0 - prm.gamma) * s.v * prm.mass / prm.dt, -prm.u_bound, prm.u_bound)
            s = step(s, u, prm)
            x[dm.x[j, k, :3]] = s.p
            x[dm.x[j, k, 3:]] = s.v
            x[dm.u[j, k]] = u
            pos[j, k] = s.p
            x[dm.nu[j, k]] = 0.0
            x[dm.nu[j, k, 0]] = 1.0
            cells = dm.rt[(j + 1, k + 1)]
            home = None
            for c, vid in cells.items():
                lo, hi = grid.cell_box(c)
                if np.all(s.p >= lo) and np.all(s.p <= hi):
                    home = vid
                    break
            if home is None:
                return None
            for vid in cells.values():
                x[vid] = 0.0
            x[home] = 1.0
    for blk in dm.blocks:
        x[blk.o] = 0.0
        x[[blk.b, blk.bbar, blk.bhat]] = 0.0
    for j, k, psi, faces, z in dm.obstacle_rows:
        if z.size == 0:
            return None
        obs = next(o for o in inp.obstacles if o.index == psi)
        ok = obs.hull.normals[faces] @ pos[j - 1, k - 1] >= obs.hull.offsets[faces] + STRICT_EPS
        if not ok.any():
            return None
        x[z] = 1.0
        x[z[int(np.argmax(ok))]] = 0.0
    be = inp.safety_radius * DODECAHEDRON_RADIUS_RATIO + STRICT_EPS
    for i, j, k, faces, z in dm.pair_rows:
        if z.size == 0:
            return None
        ok = DODECAHEDRON_NORMALS[faces] @ (pos[j - 1, k - 1] - pos[i - 1, k - 1]) >= be
        if not ok.any():
            return None
        x[z] = 1.0
        x[z[int(np.argmax(ok))]] = 0.0
    kd = inp.d_step - 1
    for j, tau in enumerate(dm.d_targets):
        if tau is not None:
            x[dm.d_aux[j]] = np.abs(pos[j, kd] - inp.mesh.centroids[tau - 1])
    if model.max_violation(x) > 1e-7:
        return None
    return x


def decode(result: SolveResult, dm: DecodeMap, int_tol: float = 1e-6, sim_tol: float = 1e-6) -> PlanSolution:
    if not result.has_solution:
        raise DecodeError(f"no solution to decode (status {result.status.value})")
    inp = dm.inputs
    x = np.asarray(result.assignment, dtype=float)
    N, K = inp.n_agents, inp.horizon
    for ids in (dm.nu.reshape(-1), np.array([b.bhat for b in dm.blocks], dtype=np.int64)):
        if ids.size and np.max(np.abs(x[ids] - np.round(x[ids]))) > int_tol:
            raise DecodeError("binary variable off {0, 1} beyond tolerance")
    nu = np.round(x[dm.nu])
    if np.any(nu.sum(axis=2) != 1):
        raise DecodeError("each agent and step needs exactly one active configuration")
    xi = np.argmax(nu, axis=2) + 1
    ub = inp.params.u_bound
    controls = np.clip(x[dm.u], -ub, ub)
    states = np.zeros((N, K, 6))
    for j in range(N):
        s = inp.states[j]
        for k in range(K):
            s = step(s, controls[j, k], inp.params)
            states[j, k] = s.as_vector()
    milp_x = x[dm.x]
    err = np.max(np.abs(states - milp_x)) if states.size else 0.0
    if err > sim_tol * max(1.0, float(np.max(np.abs(milp_x)))):
        raise DecodeError(f"re-simulated trajectory deviates from the plan by {err:.3g}")
    q = inp.coverage.q
    predicted = sorted(
        (b.agent, b.tau, b.kappa) for b in dm.blocks if round(x[b.bhat]) == 1 and q[b.tau - 1] == 0
    )
    seen = set()
    for _, tau, _ in predicted:
        if tau in seen:
            raise DecodeError(f"facet {tau} planned to be covered twice")
        seen.add(tau)
    return PlanSolution(
        controls, xi, states, predicted, result.status, result.objective_value, result.bound, dict(result.stats), dm.d_targets
    )


def plan_objective(x, dm: DecodeMap) -> float:
    """Recompute the mission objective from an assignment's positions and coverage indicators."""
    inp = dm.inputs
    x = np.asarray(x, dtype=float)
    total = 0.0
    for j, tau in enumerate(dm.d_targets):
        if tau is not None:
            p = x[dm.x[j, inp.d_step - 1, :3]]
            total += inp.w_d * float(np.sum(np.abs(p - inp.mesh.centroids[tau - 1])))
    for b in dm.blocks:
        total -= inp.sigma(b.kappa) * round(x[b.bhat])
    return total


def plan_step(
    inputs: PlanInputs,
    budget: Budget | None = None,
    backend: str = "auto",
) -> tuple[PlanSolution, MilpModel, DecodeMap]:
    """Build, solve and decode one receding-horizon step.

    The time budget covers the whole call; the solver gets what is left after
    building the model, less a reserve for HiGHS' coarse time checks.
    """
    t0 = time.perf_counter()
    model, dm = build_milp(inputs)
    hint = None
    chosen = backend
    if backend == "auto":
        chosen = "bnb" if int(model.is_binary.sum()) <= 40 and model.n_vars <= 200 else "highs"
    if chosen == "highs":
        hint = brake_hint(model, dm)
    if budget is not None and budget.max_seconds is not None:
        left = budget.max_seconds * (1.0 - SOLVE_RESERVE) - (time.perf_counter() - t0)
        budget = Budget(budget.max_nodes, max(0.1, left))
    result = solve(model, budget, backend=chosen, hint=hint)
    if result.status is Status.NO_SOLUTION and hint is not None:
        obj = float(model.objective_vector() @ hint) + model.objective.constant
        result = SolveResult(Status.INCUMBENT, hint, obj, result.bound, {**result.stats, "from_hint": True})
    if result.status is Status.INFEASIBLE:
        raise PlanInfeasible("the coverage model has no feasible plan (check safety radius and obstacles)")
    if result.status is Status.NO_SOLUTION:
        raise PlanInfeasible("solver budget exhausted without a feasible plan")
    result.stats["build_time"] = dm.build_time
    result.stats["n_vars"] = model.n_vars
    result.stats["n_binaries"] = int(model.is_binary.sum())
    result.stats["n_constraints"] = model.n_constraints
    return decode(result, dm), model, dm
