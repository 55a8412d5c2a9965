"""Exact 3D primitives: planes, triangles, rays and halfspace hulls.

Points are plain ``numpy`` arrays of shape ``(3,)``. Facet, cell and
configuration indices exposed to callers are 1-based; array positions used
internally are 0-based.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateFacet, DegenerateHull, InvalidRadius, OffPlane

PARALLEL_EPS = 1e-9
TRIANGLE_TOL = 1e-7
TIE_EPS = 1e-9


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite point {v}")
    return v


@dataclass(frozen=True)
class Plane:
    """``normal . x = offset`` with a unit normal."""

    normal: np.ndarray
    offset: float

    def signed_distance(self, p) -> float:
        return float(np.dot(self.normal, p) - self.offset)


@dataclass(frozen=True)
class Facet:
    vertices: np.ndarray  # (3, 3), one vertex per row
    centroid: np.ndarray
    plane: Plane
    index: int


@dataclass(frozen=True)
class Ray:
    """Segment ``origin + d (endpoint - origin)`` for ``d`` in [0, 1]."""

    origin: np.ndarray
    endpoint: np.ndarray

    def __post_init__(self):
        if np.linalg.norm(self.endpoint - self.origin) <= 1e-9:
            raise ValueError("ray origin and endpoint coincide")

    def at(self, d: float) -> np.ndarray:
        return self.origin + d * (self.endpoint - self.origin)


class Hit(NamedTuple):
    d: float


class Miss(enum.Enum):
    PARALLEL = "parallel"
    OUT_OF_SEGMENT = "out-of-segment"


@dataclass(frozen=True)
class ConvexHullH:
    """Intersection of halfspaces ``normals[i] . x <= offsets[i]``."""

    normals: np.ndarray  # (n, 3)
    offsets: np.ndarray  # (n,)

    @property
    def n(self) -> int:
        return len(self.offsets)

    @property
    def planes(self) -> list[Plane]:
        return [Plane(nrm, float(off)) for nrm, off in zip(self.normals, self.offsets)]

    def translated(self, shift) -> "ConvexHullH":
        shift = np.asarray(shift, dtype=float)
        return ConvexHullH(self.normals, self.offsets + self.normals @ shift)

    def margins(self, points) -> np.ndarray:
        """``normals . p - offsets`` for every point (rows) and face (columns)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.normals.T - self.offsets


@dataclass(frozen=True)
class Mesh:
    facets: tuple[Facet, ...]
    # stacked copies of the facet data for vectorised queries
    vertices: np.ndarray = field(init=False, repr=False, compare=False)
    centroids: np.ndarray = field(init=False, repr=False, compare=False)
    normals: np.ndarray = field(init=False, repr=False, compare=False)
    offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        facets = tuple(self.facets)
        object.__setattr__(self, "facets", facets)
        for k, f in enumerate(facets, start=1):
            if f.index != k:
                raise ValueError(f"facet indices must run 1..|T| without gaps (got {f.index} at {k})")
        if facets:
            verts = np.stack([f.vertices for f in facets])
            cents = np.stack([f.centroid for f in facets])
            norms = np.stack([f.plane.normal for f in facets])
            offs = np.array([f.plane.offset for f in facets])
        else:
            verts = np.zeros((0, 3, 3))
            cents = np.zeros((0, 3))
            norms = np.zeros((0, 3))
            offs = np.zeros(0)
        keys = {tuple(sorted(map(tuple, v.round(12)))) for v in verts}
        if len(keys) != len(facets):
            raise ValueError("two facets share all three vertices")
        for name, arr in (("vertices", verts), ("centroids", cents), ("normals", norms), ("offsets", offs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        # per-facet boxes and barycentric terms reused by single-ray queries
        e0 = verts[:, 1] - verts[:, 0]
        e1 = verts[:, 2] - verts[:, 0]
        d00 = np.einsum("ij,ij->i", e0, e0)
        d01 = np.einsum("ij,ij->i", e0, e1)
        d11 = np.einsum("ij,ij->i", e1, e1)
        object.__setattr__(self, "_box", (verts.min(axis=1), verts.max(axis=1)))
        object.__setattr__(self, "_bary", (e0, e1, d00, d01, d11, d00 * d11 - d01 * d01))

    def __len__(self) -> int:
        return len(self.facets)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.vertices.reshape(-1, 3)
        return pts.min(axis=0), pts.max(axis=0)

    def digest(self) -> bytes:
        """SHA-256 over the facet vertex coordinates in facet order."""
        return hashlib.sha256(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes()).digest()


def plane_from_triangle(vertices, reference_outside_point) -> Plane:
    a, b, c = (vec3(v) for v in vertices)
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n)
    # twice the area
    if norm <= 2e-9:
        raise DegenerateFacet(f"collinear triangle {a}, {b}, {c}")
    n = n / norm
    offset = float(np.dot(n, a))
    ref = vec3(reference_outside_point)
    if np.dot(n, ref) <= offset:
        n, offset = -n, -offset
    return Plane(n, offset)


def make_facet(vertices, index: int, reference_outside_point) -> Facet:
    verts = np.array([vec3(v) for v in vertices])
    plane = plane_from_triangle(verts, reference_outside_point)
    return Facet(verts, verts.mean(axis=0), plane, index)


def ray_plane_param(ray: Ray, plane: Plane) -> Hit | Miss:
    direction = ray.endpoint - ray.origin
    denom = float(np.dot(plane.normal, direction))
    if abs(denom) <= PARALLEL_EPS * float(np.linalg.norm(direction)):
        # includes the coplanar ("distorted view") case
        return Miss.PARALLEL
    d = (plane.offset - float(np.dot(plane.normal, ray.origin))) / denom
    if 0.0 <= d <= 1.0:
        return Hit(d)
    return Miss.OUT_OF_SEGMENT


def barycentric(p, tri) -> tuple[float, float, float]:
    a, b, c = tri
    v0, v1, v2 = b - a, c - a, p - a
    d00 = float(np.dot(v0, v0))
    d01 = float(np.dot(v0, v1))
    d11 = float(np.dot(v1, v1))
    d20 = float(np.dot(v2, v0))
    d21 = float(np.dot(v2, v1))
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return 1.0 - v - w, v, w


def point_in_triangle(p, facet: Facet, tol: float = TRIANGLE_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    if abs(facet.plane.signed_distance(p)) > tol:
        raise OffPlane(f"point {p} is {facet.plane.signed_distance(p):.3g} m off facet {facet.index}")
    return min(barycentric(p, facet.vertices)) >= -tol


def ray_mesh_last_hit_bruteforce(ray: Ray, mesh: Mesh) -> int | None:
    """Reference implementation: one facet at a time with the scalar predicates."""
    hits = []
    for facet in mesh.facets:
        res = ray_plane_param(ray, facet.plane)
        if isinstance(res, Hit) and point_in_triangle(ray.at(res.d), facet):
            hits.append((res.d, facet.index))
    if not hits:
        return None
    best = max(d for d, _ in hits)
    return min(idx for d, idx in hits if d >= best - TIE_EPS)


def last_hits(origins, endpoints, mesh: Mesh, tol: float = TRIANGLE_TOL) -> np.ndarray:
    """Vectorised last-hit query for many rays.

    Returns the 0-based position of the last facet crossed by each ray
    (largest ray parameter, ties to the lower index), or -1 on a miss.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    endpoints = np.atleast_2d(np.asarray(endpoints, dtype=float))
    n_rays = len(origins)
    if len(mesh) == 0 or n_rays == 0:
        return np.full(n_rays, -1, dtype=np.int64)
    direction = endpoints - origins  # (R, 3)
    length = np.linalg.norm(direction, axis=1)  # (R,)
    denom = direction @ mesh.normals.T  # (R, F)
    numer = mesh.offsets[None, :] - origins @ mesh.normals.T
    ok = np.abs(denom) > PARALLEL_EPS * length[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(ok, numer / np.where(ok, denom, 1.0), np.nan)
    ok &= (d >= 0.0) & (d <= 1.0)

    rows, cols = np.nonzero(ok)
    result = np.full(n_rays, -1, dtype=np.int64)
    if rows.size == 0:
        return result
    dd = d[rows, cols]
    pts = origins[rows] + dd[:, None] * direction[rows]
    tri = mesh.vertices[cols]
    a = tri[:, 0]
    v0 = tri[:, 1] - a
    v1 = tri[:, 2] - a
    v2 = pts - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom_b = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / denom_b
    bw = (d00 * d21 - d01 * d20) / denom_b
    bu = 1.0 - bv - bw
    inside = (bu >= -tol) & (bv >= -tol) & (bw >= -tol)

    hit_d = np.full(d.shape, -np.inf)
    hit_d[rows[inside], cols[inside]] = dd[inside]
    best = hit_d.max(axis=1)
    has = np.isfinite(best)
    near_best = hit_d >= (best - TIE_EPS)[:, None]
    first = np.argmax(near_best, axis=1)
    result[has] = first[has]
    return result


def ray_mesh_last_hit(ray: Ray, mesh: Mesh, prefilter: bool = True) -> int | None:
    """Index of the facet crossed last before the ray reaches its endpoint."""
    if len(mesh) == 0:
        return None
    if not prefilter:
        pos = last_hits(ray.origin, ray.endpoint, mesh)[0]
        return None if pos < 0 else int(pos) + 1
    o, e = ray.origin, ray.endpoint
    lo, hi = np.minimum(o, e) - 1e-9, np.maximum(o, e) + 1e-9
    vmin, vmax = mesh._box
    cand = np.flatnonzero(((vmin <= hi) & (vmax >= lo)).all(axis=1))
    if cand.size == 0:
        return None
    # same predicates as last_hits, on the candidates only
    direction = e - o
    nrm = mesh.normals[cand]
    denom = nrm @ direction
    numer = mesh.offsets[cand] - nrm @ o
    ok = np.abs(denom) > PARALLEL_EPS * math.sqrt(direction @ direction)
    d = np.divide(numer, denom, out=np.full(cand.size, np.nan), where=ok)
    ok &= (d >= 0.0) & (d <= 1.0)
    if not ok.any():
        return None
    idx = cand[ok]
    d = d[ok]
    e0, e1, d00, d01, d11, den = (a[idx] for a in mesh._bary)
    v2 = o + d[:, None] * direction - mesh.vertices[idx, 0]
    d20 = np.einsum("ij,ij->i", v2, e0)
    d21 = np.einsum("ij,ij->i", v2, e1)
    bv = (d11 * d20 - d01 * d21) / den
    bw = (d00 * d21 - d01 * d20) / den
    inside = (bv >= -TRIANGLE_TOL) & (bw >= -TRIANGLE_TOL) & (1.0 - bv - bw >= -TRIANGLE_TOL)
    if not inside.any():
        return None
    idx, d = idx[inside], d[inside]
    return int(idx[d >= d.max() - TIE_EPS].min()) + 1


def _face_halfspace(points, interior) -> tuple[np.ndarray, float]:
    a, b, c = points[:3]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n)
    if norm <= 1e-12:
        raise DegenerateHull("face with zero area")
    n = n / norm
    off = float(np.dot(n, a))
    if np.dot(n, interior) > off:
        n, off = -n, -off
    return n, off


def hull_from_fov(vertices) -> ConvexHullH:
    """Halfspace form of a pyramid given as 4 base corners (cyclic) plus apex."""
    v = np.asarray(vertices, dtype=float).reshape(5, 3)
    base, apex = v[:4], v[4]
    base_c = base.mean(axis=0)
    base_n = np.cross(base[1] - base[0], base[2] - base[0])
    if np.linalg.norm(base_n) <= 1e-12:
        raise DegenerateHull("FOV base has zero area")
    base_n /= np.linalg.norm(base_n)
    if abs(np.dot(base_n, apex - base_c)) <= 1e-9:
        raise DegenerateHull("apex lies on the FOV base plane")
    interior = 0.5 * (apex + base_c)
    normals, offsets = [], []
    for i in range(4):
        n, off = _face_halfspace(np.array([apex, base[i], base[(i + 1) % 4]]), interior)
        normals.append(n)
        offsets.append(off)
    n, off = _face_halfspace(base, interior)
    normals.append(n)
    offsets.append(off)
    return ConvexHullH(np.array(normals), np.array(offsets))


def point_in_hull(p, hull: ConvexHullH, tol: float = 1e-9) -> bool:
    return bool(np.all(hull.normals @ np.asarray(p, dtype=float) <= hull.offsets + tol))


# inradius / circumradius of a regular dodecahedron
DODECAHEDRON_RADIUS_RATIO = math.sqrt((5.0 + 2.0 * math.sqrt(5.0)) / 15.0)


def _dodecahedron_normals() -> np.ndarray:
    # face normals of a dodecahedron = vertex directions of the dual icosahedron,
    # here in the orientation with one vertex on the +z axis (two horizontal faces)
    s = 1.0 / math.sqrt(5.0)
    r = 2.0 * s
    normals = [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    for k in range(5):
        a = 2.0 * math.pi * k / 5.0
        normals.append((r * math.cos(a), r * math.sin(a), s))
        b = a + math.pi / 5.0
        normals.append((r * math.cos(b), r * math.sin(b), -s))
    return np.array(normals)


DODECAHEDRON_NORMALS = _dodecahedron_normals()


def dodecahedron_hull(center, radius: float) -> ConvexHullH:
    """Regular dodecahedron inscribed in the sphere of ``radius`` about ``center``."""
    if not radius > 0:
        raise InvalidRadius(f"radius must be positive, got {radius}")
    center = vec3(center)
    inr = radius * DODECAHEDRON_RADIUS_RATIO
    return ConvexHullH(DODECAHEDRON_NORMALS.copy(), DODECAHEDRON_NORMALS @ center + inr)


def hull_from_points(points) -> ConvexHullH:
    """Halfspace form of the convex hull of a point cloud (coplanar faces merged)."""
    from scipy.spatial import ConvexHull

    pts = np.asarray(points, dtype=float)
    qh = ConvexHull(pts)
    eq = qh.equations  # normal . x + c <= 0 inside
    normals, offsets = [], []
    seen = set()
    for row in eq:
        n = row[:3] / np.linalg.norm(row[:3])
        off = -row[3] / np.linalg.norm(row[:3])
        key = tuple(np.round(np.append(n, off / max(1.0, np.abs(pts).max())), 9))
        if key in seen:
            continue
        seen.add(key)
        normals.append(n)
        offsets.append(off)
    return ConvexHullH(np.array(normals), np.array(offsets))


def gaussian_height(x, y, amplitude, center, variance):
    xo, yo = center
    vx, vy = variance
    return amplitude * np.exp(-((x - xo) ** 2 / (2.0 * vx) + (y - yo) ** 2 / (2.0 * vy)))


def gaussian_heightfield_mesh(
    amplitude: float,
    center: Sequence[float],
    variance: Sequence[float],
    grid: Sequence[int],
    extent: Sequence[Sequence[float]],
) -> Mesh:
    """Triangulated Gaussian bump on a structured grid.

    ``grid`` is the number of grid points along x and y and ``extent`` is
    ``((xmin, xmax), (ymin, ymax))``. Every quad is split along its
    (i, j) -> (i+1, j+1) diagonal, giving ``2 (nx-1) (ny-1)`` facets ordered
    quad by quad with x varying fastest.
    """
    nx, ny = (int(g) for g in grid)
    if nx < 2 or ny < 2:
        raise ValueError("grid needs at least 2 points per axis")
    if min(variance) <= 0:
        raise ValueError("variances must be positive")
    (x0, x1), (y0, y1) = extent
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = gaussian_height(X, Y, amplitude, center, variance)
    pts = np.stack([X, Y, Z], axis=-1)
    diag = math.hypot(x1 - x0, y1 - y0)
    ref = np.array([center[0], center[1], float(Z.max()) + 10.0 * diag + 1.0])

    facets = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            p00, p10 = pts[i, j], pts[i + 1, j]
            p01, p11 = pts[i, j + 1], pts[i + 1, j + 1]
            for tri in ((p00, p10, p11), (p00, p11, p01)):
                facets.append(make_facet(tri, len(facets) + 1, ref))
    return Mesh(tuple(facets))


def mesh_from_triangles(triangles, reference_outside_point=None) -> Mesh:
    """Build a mesh from a ``(F, 3, 3)`` array.

    Without a reference point, orientation follows the winding
    (counter-clockwise seen from outside).
    """
    facets = []
    for k, tri in enumerate(np.asarray(triangles, dtype=float), start=1):
        if reference_outside_point is None:
            n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            if np.linalg.norm(n) <= 2e-9:
                raise DegenerateFacet(f"facet {k} is degenerate")
            ref = tri.mean(axis=0) + n / np.linalg.norm(n)
        else:
            ref = reference_outside_point
        facets.append(make_facet(tri, k, ref))
    return Mesh(tuple(facets))
