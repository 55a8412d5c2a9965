"""Scenario files (TOML): schema, defaults, validation and the derived world.

Every key is optional; omitted keys take the default values below. Lengths
are in m, time in s, forces in N, mass in kg and angles in degrees.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .agent import AgentState, CameraIntrinsics, GimbalSet, KinematicParams, precompute_fovs
from .errors import CoverageError, ScenarioError
from .geometry import DODECAHEDRON_RADIUS_RATIO, Mesh, gaussian_heightfield_mesh, hull_from_points
from .planner import Obstacle
from .visibility import GridDecomposition, VisibilityLearningConfig, provenance_digest


@dataclass(frozen=True)
class EnvironmentCfg:
    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (100.0, 100.0, 100.0)
    grid: tuple = (10, 10, 10)


@dataclass(frozen=True)
class ObjectCfg:
    kind: str = "gaussian"  # "gaussian" or "mesh"
    amplitude: float = 40.0
    center: tuple = (45.0, 45.0)
    variance: tuple = (80.0, 80.0)
    points: tuple = (12, 11)  # grid points along x, y: 2*11*10 = 220 facets
    extent: tuple = ((20.0, 70.0), (20.0, 70.0))
    path: str = ""
    obstacle: bool = True  # treat the object's convex hull as an obstacle


@dataclass(frozen=True)
class GimbalCfg:
    theta_deg: tuple = (30.0, 90.0, 150.0)
    phi_deg: tuple = (30.0, 105.0, 180.0, 255.0, 330.0)


@dataclass(frozen=True)
class PlannerCfg:
    horizon: int = 5
    safety_radius: float = 2.0
    big_m: float = 0.0  # 0 selects 10 x environment diameter
    distance_weight: float = 0.0  # 0 selects 1 / (sum of environment side lengths)
    time_limit: float = 30.0
    max_nodes: int = 0  # 0 means unlimited
    backend: str = "auto"
    tighten: bool = True


@dataclass(frozen=True)
class TargetCfg:
    count: int = 0  # 0 means every facet
    target_subset_seed: int = 0
    indices: tuple = ()


@dataclass(frozen=True)
class AgentCfg:
    position: tuple
    velocity: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ObstacleCfg:
    points: tuple  # convex hull of these points


DEFAULT_AGENTS = (
    AgentCfg((10.0, 10.0, 50.0)),
    AgentCfg((90.0, 10.0, 50.0)),
    AgentCfg((10.0, 90.0, 50.0)),
)


@dataclass(frozen=True)
class Scenario:
    environment: EnvironmentCfg = EnvironmentCfg()
    object: ObjectCfg = ObjectCfg()
    kinematics: KinematicParams = KinematicParams()
    camera: CameraIntrinsics = CameraIntrinsics()
    gimbal: GimbalCfg = GimbalCfg()
    visibility: VisibilityLearningConfig = VisibilityLearningConfig()
    planner: PlannerCfg = PlannerCfg()
    targets: TargetCfg = TargetCfg()
    agents: tuple = DEFAULT_AGENTS
    obstacles: tuple = ()
    max_steps: int = 500
    base_dir: str = field(default=".", compare=False)


_SECTIONS = {
    "environment": EnvironmentCfg,
    "object": ObjectCfg,
    "kinematics": KinematicParams,
    "camera": CameraIntrinsics,
    "gimbal": GimbalCfg,
    "visibility": VisibilityLearningConfig,
    "planner": PlannerCfg,
    "targets": TargetCfg,
}
_ARRAYS = {"agents": AgentCfg, "obstacles": ObstacleCfg}


# -- locating keys for diagnostics -------------------------------------------

class _Locator:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, section: str | None, key: str | None = None, item: int = 0) -> int | None:
        current, count = None, {}
        header = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.-]+)\s*\]\]?")
        for no, line in enumerate(self.lines, start=1):
            m = header.match(line)
            if m:
                current = m.group(2)
                if m.group(1) == "[[":
                    count[current] = count.get(current, -1) + 1
                if key is None and current == section and count.get(current, 0) == item:
                    return no
                continue
            if key is not None and current == section and count.get(current, 0) == item:
                if re.match(rf"^\s*{re.escape(key)}\s*=", line):
                    return no
        return None


# -- parsing -----------------------------------------------------------------

def _tuple(v):
    if isinstance(v, list):
        return tuple(_tuple(x) for x in v)
    return v


def _coerce(cls, data: dict, section: str, loc: _Locator, item: int = 0):
    names = {f.name: f for f in cls.__dataclass_fields__.values()}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ScenarioError(f"unknown key {key!r} in [{section}]", loc.find(section, key, item))
        default = names[key].default
        value = _tuple(value)
        ok = True
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif isinstance(default, str):
            ok = isinstance(value, str)
        elif isinstance(default, tuple) or default is None or key in ("position", "velocity", "points"):
            ok = isinstance(value, tuple)
        if not ok:
            raise ScenarioError(f"[{section}] {key}: wrong type {type(value).__name__}", loc.find(section, key, item))
        kwargs[key] = value
    return kwargs


def loads_scenario(text: str, base_dir=".") -> Scenario:
    loc = _Locator(text)
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(f"syntax error: {exc}", int(m.group(1)) if m else None) from None
    parts = {}
    for key, value in raw.items():
        if key == "max_steps":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ScenarioError("max_steps must be an integer", loc.find(None, "max_steps"))
            parts["max_steps"] = value
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ScenarioError(f"{key} must be a table", loc.find(None, key))
            cls = _SECTIONS[key]
            kw = _coerce(cls, value, key, loc)
            try:
                parts[key] = cls(**kw)
            except (ValueError, TypeError) as exc:
                bad = _blame(cls, kw)
                raise ScenarioError(f"[{key}] {exc}", loc.find(key, bad) if bad else loc.find(key)) from None
        elif key in _ARRAYS:
            if not isinstance(value, list):
                raise ScenarioError(f"{key} must be an array of tables ([[{key}]])", loc.find(None, key))
            items = []
            for i, entry in enumerate(value):
                kw = _coerce(_ARRAYS[key], entry, key, loc, i)
                required = "position" if key == "agents" else "points"
                if required not in kw:
                    raise ScenarioError(f"[[{key}]] entry {i + 1} needs {required!r}", loc.find(key, None, i))
                items.append(_ARRAYS[key](**kw))
            parts[key] = tuple(items)
        else:
            raise ScenarioError(f"unknown section or key {key!r}", loc.find(None, key) or loc.find(key))
    scenario = Scenario(**parts, base_dir=str(base_dir))
    validate(scenario, loc)
    return scenario


def _blame(cls, kw):
    """First key whose value alone makes the section invalid."""
    for key in kw:
        try:
            cls(**{key: kw[key]})
        except (ValueError, TypeError):
            return key
    return None


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return loads_scenario(text, base_dir=path.parent)


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def dumps_scenario(s: Scenario) -> str:
    doc = {"max_steps": s.max_steps}
    for key in _SECTIONS:
        doc[key] = {k: _plain(v) for k, v in asdict(getattr(s, key)).items()}
    doc["agents"] = [{k: _plain(v) for k, v in asdict(a).items()} for a in s.agents]
    if s.obstacles:
        doc["obstacles"] = [{"points": _plain(o.points)} for o in s.obstacles]
    return tomli_w.dumps(doc)


def write_scenario(s: Scenario, path) -> None:
    Path(path).write_text(dumps_scenario(s))


def flatten(s: Scenario) -> dict:
    """``section.key = value`` pairs describing every setting of a scenario."""
    out = {"max_steps": s.max_steps}
    for key in _SECTIONS:
        for k, v in asdict(getattr(s, key)).items():
            out[f"{key}.{k}"] = v
    for i, a in enumerate(s.agents, start=1):
        out[f"agents.{i}.position"] = a.position
        out[f"agents.{i}.velocity"] = a.velocity
    for i, o in enumerate(s.obstacles, start=1):
        out[f"obstacles.{i}.points"] = o.points
    return out


# -- derived world -----------------------------------------------------------

@dataclass
class World:
    scenario: Scenario
    mesh: Mesh
    grid: GridDecomposition
    gimbal: GimbalSet
    cam: CameraIntrinsics
    params: KinematicParams
    obstacles: list
    targets: np.ndarray  # 1-based
    fovs: list
    digest: bytes

    def initial_states(self) -> list[AgentState]:
        return [AgentState.at(a.position, a.velocity) for a in self.scenario.agents]

    @property
    def safety_inradius(self) -> float:
        return self.scenario.planner.safety_radius * DODECAHEDRON_RADIUS_RATIO


def build_mesh(s: Scenario) -> Mesh:
    o = s.object
    if o.kind == "gaussian":
        return gaussian_heightfield_mesh(o.amplitude, o.center, o.variance, o.points, o.extent)
    from .meshio import read_mesh

    path = Path(o.path)
    if not path.is_absolute():
        path = Path(s.base_dir) / path
    return read_mesh(path)


def select_targets(s: Scenario, n_facets: int) -> np.ndarray:
    t = s.targets
    if t.indices:
        return np.array(sorted(set(int(i) for i in t.indices)), dtype=int)
    if t.count:
        rng = np.random.default_rng(t.target_subset_seed)
        return np.sort(rng.choice(n_facets, size=t.count, replace=False)) + 1
    return np.arange(1, n_facets + 1)


def build_world(s: Scenario) -> World:
    mesh = build_mesh(s)
    env = s.environment
    grid = GridDecomposition(env.lower, env.upper, env.grid)
    gimbal = GimbalSet.from_degrees(s.gimbal.theta_deg, s.gimbal.phi_deg)
    obstacles = []
    if s.object.obstacle and len(mesh):
        obstacles.append(Obstacle(hull_from_points(mesh.vertices.reshape(-1, 3)), 1))
    for o in s.obstacles:
        obstacles.append(Obstacle(hull_from_points(np.array(o.points, dtype=float)), len(obstacles) + 1))
    targets = select_targets(s, len(mesh))
    digest = provenance_digest(mesh, grid, gimbal, s.camera, s.visibility.ray_scheme)
    return World(s, mesh, grid, gimbal, s.camera, s.kinematics, obstacles, targets,
                 precompute_fovs(gimbal, s.camera), digest)


# -- validation --------------------------------------------------------------

def _vec(v, n, what, line):
    if len(v) != n or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in v):
        raise ScenarioError(f"{what} must be {n} finite numbers", line)
    return np.array(v, dtype=float)


def validate(s: Scenario, loc: _Locator | None = None) -> World:
    """Check cross-field consistency and initial-state feasibility; returns the derived world."""
    loc = loc or _Locator("")
    env = s.environment
    lo = _vec(env.lower, 3, "environment.lower", loc.find("environment", "lower"))
    hi = _vec(env.upper, 3, "environment.upper", loc.find("environment", "upper"))
    if np.any(hi <= lo):
        raise ScenarioError("environment.upper must exceed environment.lower", loc.find("environment", "upper"))
    if len(env.grid) != 3 or any(not isinstance(g, int) or g < 1 for g in env.grid):
        raise ScenarioError("environment.grid must be 3 positive integers", loc.find("environment", "grid"))
    o = s.object
    if o.kind not in ("gaussian", "mesh"):
        raise ScenarioError("object.kind must be 'gaussian' or 'mesh'", loc.find("object", "kind"))
    if o.kind == "gaussian":
        _vec(o.center, 2, "object.center", loc.find("object", "center"))
        if len(o.variance) != 2 or min(o.variance) <= 0:
            raise ScenarioError("object.variance must be 2 positive numbers", loc.find("object", "variance"))
        if len(o.points) != 2 or any(not isinstance(p, int) or p < 2 for p in o.points):
            raise ScenarioError("object.points must be 2 integers >= 2", loc.find("object", "points"))
        if len(o.extent) != 2 or any(len(e) != 2 or e[1] <= e[0] for e in o.extent):
            raise ScenarioError("object.extent must be [[xmin, xmax], [ymin, ymax]]", loc.find("object", "extent"))
    elif not o.path:
        raise ScenarioError("object.path is required when kind = 'mesh'", loc.find("object", "kind"))
    for key in ("theta_deg", "phi_deg"):
        vals = getattr(s.gimbal, key)
        limit = 180.0 if key == "theta_deg" else 360.0
        if not vals or any(not isinstance(v, (int, float)) or not 0 <= v < limit for v in vals):
            raise ScenarioError(f"gimbal.{key} values must lie in [0, {limit:g})", loc.find("gimbal", key))
    p = s.planner
    checks = [
        ("horizon", p.horizon >= 1, "must be >= 1"),
        ("safety_radius", p.safety_radius > 0, "must be positive"),
        ("big_m", p.big_m >= 0, "must be >= 0"),
        ("distance_weight", p.distance_weight >= 0, "must be >= 0"),
        ("time_limit", p.time_limit > 0, "must be positive"),
        ("max_nodes", p.max_nodes >= 0, "must be >= 0"),
        ("backend", p.backend in ("auto", "bnb", "highs"), "must be auto, bnb or highs"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ScenarioError(f"planner.{key} {msg}", loc.find("planner", key))
    if s.max_steps < 1:
        raise ScenarioError("max_steps must be >= 1", loc.find(None, "max_steps"))
    if not s.agents:
        raise ScenarioError("at least one [[agents]] entry is required")
    for i, a in enumerate(s.agents):
        _vec(a.position, 3, "agents.position", loc.find("agents", "position", i))
        _vec(a.velocity, 3, "agents.velocity", loc.find("agents", "velocity", i))
    for i, ob in enumerate(s.obstacles):
        if len(ob.points) < 4 or any(len(q) != 3 for q in ob.points):
            raise ScenarioError("obstacle needs at least 4 points with 3 coordinates", loc.find("obstacles", "points", i))

    try:
        world = build_world(s)
    except ScenarioError:
        raise
    except (CoverageError, ValueError, OSError) as exc:
        raise ScenarioError(f"cannot build scenario: {exc}") from None
    t = s.targets
    n = len(world.mesh)
    if t.indices and any(not 1 <= i <= n for i in t.indices):
        raise ScenarioError(f"targets.indices must lie in 1..{n}", loc.find("targets", "indices"))
    if t.count < 0 or t.count > n:
        raise ScenarioError(f"targets.count must lie in 0..{n}", loc.find("targets", "count"))

    inr = world.safety_inradius
    for i, st in enumerate(world.initial_states()):
        line = loc.find("agents", "position", i)
        if not world.grid.contains(st.p):
            raise ScenarioError(f"agent {i + 1} starts outside the environment", line)
        if np.any(np.abs(st.v) > s.kinematics.v_bound):
            raise ScenarioError(f"agent {i + 1} starts above the velocity bound", loc.find("agents", "velocity", i) or line)
        for ob in world.obstacles:
            if np.max(ob.hull.margins(st.p)) <= 0.0:
                what = "the object hull" if (s.object.obstacle and ob.index == 1) else f"obstacle {ob.index}"
                raise ScenarioError(f"agent {i + 1} starts inside {what}", line)
        for j, other in enumerate(world.initial_states()[:i]):
            if np.linalg.norm(st.p - other.p) <= inr:
                raise ScenarioError(f"agents {j + 1} and {i + 1} start inside each other's safety region", line)
    return world


def default_scenario() -> Scenario:
    return Scenario()


def with_overrides(s: Scenario, **sections) -> Scenario:
    """Copy of ``s`` with whole sections or top-level fields replaced."""
    return replace(s, **sections)
