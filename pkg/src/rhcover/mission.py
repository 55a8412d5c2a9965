"""Receding-horizon mission loop, its log, and an independent log checker."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentState, anchor_fov, sample_light_rays, step
from .errors import FormatError, NoTargetRemaining, PlanInfeasible, PlanInfeasibleHint
from .geometry import DODECAHEDRON_RADIUS_RATIO, ray_mesh_last_hit
from .milp import Budget
from .planner import CoverageMap, PlanInputs, plan_step
from .scenario import World, flatten
from .visibility import VisibilityTable

log = logging.getLogger(__name__)

COVER_TOL = 1e-6  # slack on hull and cell membership when judging executed poses

COMPLETED = "Completed"
INCOMPLETE = "Incomplete"
ABORTED = "Aborted"


@dataclass
class MissionLog:
    initial: np.ndarray  # (N, 6)
    states: np.ndarray  # (S, N, 6) executed state after each step
    controls: np.ndarray  # (S, N, 3) input applied at each step
    xi: np.ndarray  # (S, N) active configuration (1-based) at each executed state
    coverage: list  # (tau, step, agent), all 1-based
    targets: np.ndarray
    status: str
    reason: str = ""
    solver: list = field(default_factory=list)  # per-step dicts
    wall_time: float = 0.0

    @property
    def n_steps(self) -> int:
        return len(self.states)

    @property
    def n_agents(self) -> int:
        return len(self.initial)

    def positions(self) -> np.ndarray:
        """(S + 1, N, 3) positions including the start."""
        return np.concatenate([self.initial[None, :, :3], self.states[..., :3]], axis=0)

    def cover_step(self) -> dict:
        return {tau: k for tau, k, _ in self.coverage}

    @property
    def completion_step(self) -> int | None:
        if self.status != COMPLETED:
            return None
        return max((k for _, k, _ in self.coverage), default=0)


def cells_seeing(p, table: VisibilityTable, grid, tol: float = COVER_TOL) -> np.ndarray:
    """Facets (0-based mask) seen from any grid cell whose closed box holds ``p``."""
    p = np.asarray(p, dtype=float)
    cells = grid.cells_overlapping(p - tol, p + tol)
    if not cells:
        return np.zeros(table.n_facets, dtype=bool)
    return table.rho[np.array(cells) - 1].any(axis=0)


def covered_by(p, xi: int, world: World, table: VisibilityTable, tol: float = COVER_TOL) -> np.ndarray:
    """Mask of facets whose centroid lies in the anchored FOV and that the occupied cell sees."""
    fov = anchor_fov(world.fovs[xi - 1].rotated, p, xi)
    inside = np.all(fov.hull.margins(world.mesh.centroids) <= tol, axis=1)
    return inside & cells_seeing(p, table, world.grid, tol)


def step_budget(world: World) -> Budget:
    p = world.scenario.planner
    return Budget(max_nodes=p.max_nodes or None, max_seconds=p.time_limit)


def plan_inputs(world: World, table: VisibilityTable, states, coverage: CoverageMap) -> PlanInputs:
    p = world.scenario.planner
    return PlanInputs(
        states=list(states),
        coverage=coverage,
        table=table,
        grid=world.grid,
        mesh=world.mesh,
        gimbal=world.gimbal,
        cam=world.cam,
        params=world.params,
        horizon=p.horizon,
        obstacles=world.obstacles,
        safety_radius=p.safety_radius,
        big_m=p.big_m or None,
        w_d=p.distance_weight or None,
        targets=world.targets,
        tighten=p.tighten,
        fovs=world.fovs,
    )


def run_mission(world: World, table: VisibilityTable, progress=None) -> MissionLog:
    """Plan, apply the first input of every agent, update coverage, repeat."""
    t0 = time.perf_counter()
    table.check(world.digest, world.grid.dims)
    states = world.initial_states()
    n = len(states)
    coverage = CoverageMap(len(world.mesh))
    targets = world.targets
    hist_x, hist_u, hist_xi, records, solver = [], [], [], [], []
    status, reason = INCOMPLETE, f"step limit {world.scenario.max_steps} reached"
    max_steps = world.scenario.max_steps
    if np.all(coverage.q[targets - 1] == 1) or targets.size == 0:
        status, reason = COMPLETED, "all targets covered"
    else:
        for k in range(1, max_steps + 1):
            try:
                plan, _, _ = plan_step(plan_inputs(world, table, states, coverage), step_budget(world), world.scenario.planner.backend)
            except (PlanInfeasible, PlanInfeasibleHint, NoTargetRemaining) as exc:
                status, reason = ABORTED, f"step {k}: {exc}"
                break
            u = plan.first_controls()
            xi = plan.xi[:, 0]
            states = [step(s, u[j], world.params) for j, s in enumerate(states)]
            new = []
            for j, s in enumerate(states):
                mask = covered_by(s.p, int(xi[j]), world, table)
                for t in np.nonzero(mask)[0]:
                    tau = int(t) + 1
                    if tau in targets and not coverage.covered(tau):
                        coverage.mark(tau)
                        new.append((tau, k, j + 1))
            records += new
            hist_x.append([s.as_vector() for s in states])
            hist_u.append(u.copy())
            hist_xi.append(xi.copy())
            solver.append(
                {
                    "status": plan.status.value,
                    "objective": plan.objective,
                    "bound": plan.bound,
                    "wall_time": float(plan.stats.get("wall_time", 0.0)),
                    "build_time": float(plan.stats.get("build_time", 0.0)),
                    "nodes": int(plan.stats.get("nodes", 0)),
                    "backend": plan.stats.get("backend", ""),
                    "predicted": len(plan.predicted),
                    "new": len(new),
                }
            )
            if progress:
                progress(k, new, plan)
            log.info("step %d: %d new, %d/%d covered", k, len(new), int(coverage.q[targets - 1].sum()), targets.size)
            if np.all(coverage.q[targets - 1] == 1):
                status, reason = COMPLETED, "all targets covered"
                break
    return MissionLog(
        initial=np.array([s.as_vector() for s in world.initial_states()]),
        states=np.array(hist_x).reshape(-1, n, 6),
        controls=np.array(hist_u).reshape(-1, n, 3),
        xi=np.array(hist_xi, dtype=int).reshape(-1, n),
        coverage=sorted(records, key=lambda r: (r[1], r[0])),
        targets=targets.copy(),
        status=status,
        reason=reason,
        solver=solver,
        wall_time=time.perf_counter() - t0,
    )


# -- verification --------------------------------------------------------------

@dataclass
class Check:
    name: str
    ok: bool
    problems: list = field(default_factory=list)


@dataclass
class VerificationReport:
    checks: list
    discrepancies: list  # exact-ray audit disagreements with the learned table

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list:
        return [c.name for c in self.checks if not c.ok]

    def text(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"{'PASS' if c.ok else 'FAIL'} {c.name}")
            lines += [f"    {p}" for p in c.problems[:20]]
            if len(c.problems) > 20:
                lines.append(f"    ... {len(c.problems) - 20} more")
        lines.append(f"ray-audit discrepancies: {len(self.discrepancies)}")
        lines += [f"    {d}" for d in self.discrepancies[:20]]
        return "\n".join(lines)


def verify_log(mlog: MissionLog, world: World, table: VisibilityTable, rays: int | None = None) -> VerificationReport:
    """Re-check a mission log against the scenario without trusting the planner."""
    prm = world.params
    n = mlog.n_agents
    checks = []

    # dynamics replay
    probs = []
    prev = [AgentState(mlog.initial[j, :3].copy(), mlog.initial[j, 3:].copy()) for j in range(n)]
    for k in range(mlog.n_steps):
        for j in range(n):
            try:
                nxt = step(prev[j], mlog.controls[k, j], prm)
            except Exception as exc:  # input bound violation surfaces below too
                probs.append(f"step {k + 1} agent {j + 1}: {exc}")
                nxt = AgentState(mlog.states[k, j, :3].copy(), mlog.states[k, j, 3:].copy())
            if not np.array_equal(nxt.as_vector(), mlog.states[k, j]):
                err = float(np.max(np.abs(nxt.as_vector() - mlog.states[k, j])))
                probs.append(f"step {k + 1} agent {j + 1}: replay differs by {err:.3g}")
            prev[j] = AgentState(mlog.states[k, j, :3].copy(), mlog.states[k, j, 3:].copy())
    checks.append(Check("dynamics", not probs, probs))

    # bounds
    probs = []
    if mlog.n_steps:
        bad_u = np.argwhere(np.abs(mlog.controls) > prm.u_bound + 1e-9)
        bad_v = np.argwhere(np.abs(mlog.states[..., 3:]) > prm.v_bound + 1e-6)
        probs += [f"step {k + 1} agent {j + 1}: input bound exceeded" for k, j, _ in bad_u]
        probs += [f"step {k + 1} agent {j + 1}: velocity bound exceeded" for k, j, _ in bad_v]
        pos = mlog.states[..., :3]
        lo, hi = np.array(world.grid.lower), np.array(world.grid.upper)
        out = np.argwhere(np.any((pos < lo - 1e-6) | (pos > hi + 1e-6), axis=2))
        probs += [f"step {k + 1} agent {j + 1}: outside the environment" for k, j in out]
    checks.append(Check("bounds", not probs, sorted(set(probs))))

    # obstacles
    probs = []
    pos_all = mlog.positions()
    for ob in world.obstacles:
        for k in range(pos_all.shape[0]):
            for j in range(n):
                if np.max(ob.hull.margins(pos_all[k, j])) <= 0.0:
                    probs.append(f"step {k} agent {j + 1}: inside obstacle {ob.index}")
    checks.append(Check("obstacles", not probs, probs))

    # pairwise safety
    probs = []
    inr = world.scenario.planner.safety_radius * DODECAHEDRON_RADIUS_RATIO
    for k in range(pos_all.shape[0]):
        for i in range(n):
            for j in range(i + 1, n):
                d = float(np.linalg.norm(pos_all[k, i] - pos_all[k, j]))
                if d < inr - 1e-6:
                    probs.append(f"step {k}: agents {i + 1} and {j + 1} {d:.3f} m apart (< {inr:.3f})")
    checks.append(Check("separation", not probs, probs))

    # coverage records
    probs, disc = [], []
    seen = set()
    targets = set(int(t) for t in mlog.targets)
    n_rays = rays or world.scenario.visibility.rays_per_pose
    scheme = world.scenario.visibility.ray_scheme
    for tau, k, j in mlog.coverage:
        if tau in seen:
            probs.append(f"facet {tau} covered more than once")
        seen.add(tau)
        if tau not in targets:
            probs.append(f"facet {tau} is not a target")
        if not (1 <= k <= mlog.n_steps and 1 <= j <= n):
            probs.append(f"facet {tau}: record (step {k}, agent {j}) out of range")
            continue
        p = mlog.states[k - 1, j - 1, :3]
        xi = int(mlog.xi[k - 1, j - 1])
        if not 1 <= xi <= len(world.fovs):
            probs.append(f"facet {tau}: configuration {xi} out of range")
            continue
        if not covered_by(p, xi, world, table)[tau - 1]:
            probs.append(f"facet {tau}: not covered by agent {j} at step {k} (hull and table predicate fails)")
            continue
        fov = anchor_fov(world.fovs[xi - 1].rotated, p, xi)
        hits = {ray_mesh_last_hit(r, world.mesh) for r in sample_light_rays(fov, n_rays, scheme, seed=world.scenario.visibility.seed)}
        if tau not in hits:
            disc.append(f"facet {tau} (step {k}, agent {j}): no exact light ray ends on it")
    steps = [k for _, k, _ in mlog.coverage]
    if steps != sorted(steps):
        probs.append("coverage records are not in time order")
    if mlog.status == COMPLETED and seen != targets:
        probs.append(f"status Completed but {len(targets - seen)} targets uncovered")
    checks.append(Check("coverage", not probs, probs))
    return VerificationReport(checks, disc)


# -- serialization ---------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def write_log(mlog: MissionLog, out_dir, scenario=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for j in range(mlog.n_agents):
        with open(out / f"agent_{j + 1}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz", "xi_index"])
            w.writerow([0, *map(_f, mlog.initial[j]), "", "", "", ""])
            for k in range(mlog.n_steps):
                w.writerow([k + 1, *map(_f, mlog.states[k, j]), *map(_f, mlog.controls[k, j]), int(mlog.xi[k, j])])
    with open(out / "coverage.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau_index", "step", "agent"])
        for rec in mlog.coverage:
            w.writerow(rec)
    lines = [
        "# mission summary (key = value)",
        f"status = {mlog.status}",
        f"reason = {mlog.reason}",
        f"agents = {mlog.n_agents}",
        f"steps = {mlog.n_steps}",
        f"targets = {' '.join(str(int(t)) for t in mlog.targets)}",
        f"target_count = {len(mlog.targets)}",
        f"covered_count = {len(mlog.coverage)}",
        f"duplicate_coverage = {len(mlog.coverage) - len({r[0] for r in mlog.coverage})}",
        f"completion_step = {mlog.completion_step if mlog.completion_step is not None else 'none'}",
        f"wall_time_s = {mlog.wall_time:.3f}",
        f"solver_time_s = {sum(s['wall_time'] for s in mlog.solver):.3f}",
        f"build_time_s = {sum(s['build_time'] for s in mlog.solver):.3f}",
        f"solver_nodes = {sum(s['nodes'] for s in mlog.solver)}",
        f"solves_optimal = {sum(1 for s in mlog.solver if s['status'] == 'Optimal')}",
        f"solves_incumbent = {sum(1 for s in mlog.solver if s['status'] == 'Incumbent')}",
    ]
    if scenario is not None:
        for key, val in flatten(scenario).items():
            lines.append(f"scenario.{key} = {val}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, val = line.partition(" = ")
        out[key.strip()] = val.strip()
    return out


def read_log(out_dir) -> MissionLog:
    out = Path(out_dir)
    try:
        summary = read_summary(out / "summary.txt")
        n = int(summary["agents"])
        init, states, controls, xis = [], [], [], []
        for j in range(n):
            with open(out / f"agent_{j + 1}.csv", newline="") as fh:
                rows = list(csv.DictReader(fh))
            init.append([float(rows[0][c]) for c in ("px", "py", "pz", "vx", "vy", "vz")])
            states.append([[float(r[c]) for c in ("px", "py", "pz", "vx", "vy", "vz")] for r in rows[1:]])
            controls.append([[float(r[c]) for c in ("ux", "uy", "uz")] for r in rows[1:]])
            xis.append([int(r["xi_index"]) for r in rows[1:]])
        with open(out / "coverage.csv", newline="") as fh:
            coverage = [(int(r["tau_index"]), int(r["step"]), int(r["agent"])) for r in csv.DictReader(fh)]
        targets = np.array([int(t) for t in summary["targets"].split()], dtype=int)
    except (OSError, KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"cannot read mission log in {out}: {exc}") from None
    s = len(states[0])
    if any(len(x) != s for x in states):
        raise FormatError("agent trajectories have different lengths")
    return MissionLog(
        initial=np.array(init),
        states=np.array(states).transpose(1, 0, 2).reshape(s, n, 6),
        controls=np.array(controls).transpose(1, 0, 2).reshape(s, n, 3),
        xi=np.array(xis, dtype=int).T.reshape(s, n),
        coverage=coverage,
        targets=targets,
        status=summary.get("status", INCOMPLETE),
        reason=summary.get("reason", ""),
    )
