"""Agent kinematics, camera field of view and light-ray bundles."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputOutOfRange
from .geometry import ConvexHullH, Ray, hull_from_fov


@dataclass(frozen=True)
class KinematicParams:
    dt: float = 1.0
    gamma: float = 0.2
    mass: float = 1.05
    v_bound: float = 12.0
    u_bound: float = 10.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not (self.v_bound > 0 and self.u_bound > 0):
            raise ValueError("velocity and input bounds must be positive")

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """State-space pair (A, B) acting on x = [p, v]."""
        eye = np.eye(3)
        A = np.block([[eye, self.dt * eye], [np.zeros((3, 3)), (1.0 - self.gamma) * eye]])
        B = np.vstack([np.zeros((3, 3)), (self.dt / self.mass) * eye])
        return A, B


@dataclass(frozen=True)
class AgentState:
    p: np.ndarray
    v: np.ndarray

    @classmethod
    def at(cls, p, v=(0.0, 0.0, 0.0)) -> "AgentState":
        return cls(np.asarray(p, dtype=float).copy(), np.asarray(v, dtype=float).copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


def step(state: AgentState, u, params: KinematicParams, tol: float = 1e-9) -> AgentState:
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > params.u_bound + tol):
        raise InputOutOfRange(f"input {u} exceeds bound {params.u_bound}")
    p = state.p + params.dt * state.v
    v = (1.0 - params.gamma) * state.v + (params.dt / params.mass) * u
    return AgentState(p, v)


@dataclass(frozen=True)
class CameraIntrinsics:
    length: float = 10.0
    width: float = 10.0
    range: float = 16.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.range > 0):
            raise ValueError("camera length, width and range must be positive")

    @property
    def max_ray_length(self) -> float:
        return math.sqrt(self.range**2 + (self.length / 2) ** 2 + (self.width / 2) ** 2)


def base_fov_vertices(cam) -> np.ndarray:
    """The 5 FOV vertices (rows) of a downward camera at the origin, apex last."""
    l2, w2, r = cam.length / 2.0, cam.width / 2.0, cam.range
    return np.array(
        [
            [-l2, w2, -r],
            [l2, w2, -r],
            [l2, -w2, -r],
            [-l2, -w2, -r],
            [0.0, 0.0, 0.0],
        ]
    )


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_fov(base, theta: float, phi: float) -> np.ndarray:
    """Tilt about y by ``theta`` then pan about z by ``phi`` (radians)."""
    R = rot_z(phi) @ rot_y(theta)
    return np.asarray(base, dtype=float) @ R.T


@dataclass(frozen=True)
class GimbalSet:
    """Finite set of admissible (theta, phi) pairs, row-major over (thetas, phis)."""

    thetas: tuple[float, ...]
    phis: tuple[float, ...]

    def __post_init__(self):
        for t in self.thetas:
            if not 0 <= t < math.pi:
                raise ValueError(f"theta {t} outside [0, pi)")
        for p in self.phis:
            if not 0 <= p < 2 * math.pi:
                raise ValueError(f"phi {p} outside [0, 2pi)")
        if not self.thetas or not self.phis:
            raise ValueError("gimbal sets must be nonempty")

    @classmethod
    def from_degrees(cls, thetas: Sequence[float], phis: Sequence[float]) -> "GimbalSet":
        return cls(tuple(math.radians(t) for t in thetas), tuple(math.radians(p) for p in phis))

    @property
    def configurations(self) -> list[tuple[float, float]]:
        return [(t, p) for t in self.thetas for p in self.phis]

    def __len__(self) -> int:
        return len(self.thetas) * len(self.phis)

    def angles(self, xi_index: int) -> tuple[float, float]:
        """(theta, phi) of the 1-based configuration index."""
        return self.configurations[xi_index - 1]


@dataclass(frozen=True)
class FovConfiguration:
    xi_index: int
    rotated: np.ndarray  # (5, 3), apex at the origin
    translated: np.ndarray | None = None
    hull: ConvexHullH | None = None

    @property
    def apex(self) -> np.ndarray:
        return self.translated[4] if self.translated is not None else self.rotated[4]


def precompute_fovs(gimbal: GimbalSet, cam: CameraIntrinsics) -> list[FovConfiguration]:
    base = base_fov_vertices(cam)
    return [
        FovConfiguration(k, rotate_fov(base, t, p))
        for k, (t, p) in enumerate(gimbal.configurations, start=1)
    ]


def anchor_fov(rotated, p, xi_index: int = 0) -> FovConfiguration:
    rotated = np.asarray(rotated, dtype=float)
    translated = rotated + np.asarray(p, dtype=float)
    return FovConfiguration(xi_index, rotated, translated, hull_from_fov(translated))


def base_lattice(n: int) -> np.ndarray:
    """(s, t) fractions in (0, 1)^2 of the first ``n`` points of a centred lattice."""
    m = math.ceil(math.sqrt(n))
    ticks = (np.arange(m) + 0.5) / m
    s, t = np.meshgrid(ticks, ticks, indexing="ij")
    return np.stack([s.ravel(), t.ravel()], axis=1)[:n]


def ray_origins(base_corners, fractions) -> np.ndarray:
    """Points on the rectangular base spanned from corner 0 along edges 0->1 and 0->3."""
    c = np.asarray(base_corners, dtype=float)
    e1 = c[1] - c[0]
    e2 = c[3] - c[0]
    f = np.asarray(fractions, dtype=float)
    return c[0] + f[:, :1] * e1 + f[:, 1:2] * e2


def sample_light_rays(
    fov: FovConfiguration,
    n: int,
    scheme: str = "uniform-grid",
    seed: int | None = None,
) -> list[Ray]:
    if n < 1:
        raise ValueError("need at least one ray")
    if fov.translated is None:
        raise ValueError("FOV must be anchored before casting rays")
    if scheme == "uniform-grid":
        frac = base_lattice(n)
    elif scheme == "seeded-random":
        if seed is None:
            raise ValueError("seeded-random scheme needs a seed")
        frac = np.random.default_rng(seed).random((n, 2))
    else:
        raise ValueError(f"unknown ray scheme {scheme!r}")
    origins = ray_origins(fov.translated[:4], frac)
    apex = fov.translated[4]
    return [Ray(o, apex.copy()) for o in origins]
