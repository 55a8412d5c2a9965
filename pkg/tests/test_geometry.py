import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geo_cases import random_mesh, random_ray
from rhcover.errors import DegenerateFacet, DegenerateHull, InvalidRadius, OffPlane
from rhcover.geometry import (
    ConvexHullH,
    Hit,
    Miss,
    Plane,
    Ray,
    dodecahedron_hull,
    gaussian_heightfield_mesh,
    hull_from_fov,
    hull_from_points,
    make_facet,
    mesh_from_triangles,
    plane_from_triangle,
    point_in_hull,
    point_in_triangle,
    ray_mesh_last_hit,
    ray_mesh_last_hit_bruteforce,
    ray_plane_param,
)

coord = st.floats(-50, 50, allow_nan=False)
point = st.tuples(coord, coord, coord).map(np.array)


def test_plane_axis_triangle():
    pl = plane_from_triangle([(0, 0, 0), (1, 0, 0), (0, 1, 0)], (0, 0, 5))
    assert pl.normal == pytest.approx([0, 0, 1])
    assert pl.offset == pytest.approx(0.0)


def test_plane_ignores_winding():
    a = plane_from_triangle([(0, 0, 0), (1, 0, 0), (0, 1, 0)], (0, 0, 5))
    b = plane_from_triangle([(0, 0, 0), (0, 1, 0), (1, 0, 0)], (0, 0, 5))
    assert np.allclose(a.normal, b.normal) and a.offset == pytest.approx(b.offset)


def test_plane_flips_toward_reference():
    pl = plane_from_triangle([(0, 0, 0), (1, 0, 0), (0, 0, 1)], (0, 5, 0))
    assert pl.normal == pytest.approx([0, 1, 0])
    assert pl.offset == pytest.approx(0.0, abs=1e-12)


def test_collinear_triangle_rejected():
    with pytest.raises(DegenerateFacet):
        plane_from_triangle([(0, 0, 0), (1, 1, 1), (2, 2, 2)], (0, 0, 5))


@settings(max_examples=200)
@given(point, point, point, point)
def test_plane_orientation_property(a, b, c, ref):
    tri = np.array([a, b, c])
    area2 = np.linalg.norm(np.cross(b - a, c - a))
    if area2 <= 1e-3:
        return
    pl = plane_from_triangle(tri, ref)
    if abs(np.dot(pl.normal, ref) - pl.offset) < 1e-9:
        return  # reference on the plane: orientation undefined
    assert np.linalg.norm(pl.normal) == pytest.approx(1.0, abs=1e-9)
    assert np.dot(pl.normal, ref) > pl.offset
    assert np.allclose(tri @ pl.normal, pl.offset, atol=1e-7 * max(1.0, np.abs(tri).max()))


def test_ray_plane_examples():
    z5 = Plane(np.array([0.0, 0, 1]), 5.0)
    r = Ray(np.zeros(3), np.array([0.0, 0, 10]))
    res = ray_plane_param(r, z5)
    assert res == Hit(0.5)
    assert r.at(res.d) == pytest.approx([0, 0, 5])
    assert ray_plane_param(Ray(np.zeros(3), np.array([1.0, 0, 0])), Plane(np.array([0.0, 0, 1]), 1.0)) is Miss.PARALLEL
    assert ray_plane_param(r, Plane(np.array([0.0, 0, 1]), 20.0)) is Miss.OUT_OF_SEGMENT


def test_coplanar_ray_is_parallel():
    r = Ray(np.zeros(3), np.array([1.0, 0, 0]))
    assert ray_plane_param(r, Plane(np.array([0.0, 0, 1]), 0.0)) is Miss.PARALLEL


@settings(max_examples=200)
@given(point, point, point)
def test_hit_lies_on_plane(o, e, n):
    if np.linalg.norm(e - o) < 1e-3 or np.linalg.norm(n) < 1e-3:
        return
    n = n / np.linalg.norm(n)
    pl = Plane(n, 3.0)
    res = ray_plane_param(Ray(o, e), pl)
    if isinstance(res, Hit):
        assert 0.0 <= res.d <= 1.0
        assert abs(np.dot(n, Ray(o, e).at(res.d)) - 3.0) <= 1e-6


def _facet(tri, ref=(0, 0, 5)):
    return make_facet(np.array(tri, dtype=float), 1, ref)


def test_point_in_triangle_cases():
    f = _facet([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    assert point_in_triangle(f.centroid, f)
    assert point_in_triangle(f.vertices[1], f)
    assert not point_in_triangle((0.9, 0.9, 0), f)
    with pytest.raises(OffPlane):
        point_in_triangle((0.2, 0.2, 1.0), f)


def test_last_hit_stacked_facets():
    low = [(0, 0, 2), (1, 0, 2), (0, 1, 2)]
    high = [(0, 0, 5), (1, 0, 5), (0, 1, 5)]
    mesh = mesh_from_triangles(np.array([low, high]), (0.2, 0.2, 50))
    ray = Ray(np.array([0.1, 0.1, 0.0]), np.array([0.1, 0.1, 10.0]))
    assert ray_mesh_last_hit(ray, mesh) == 2
    assert ray_mesh_last_hit_bruteforce(ray, mesh) == 2


def test_last_hit_miss_and_single():
    mesh = mesh_from_triangles(np.array([[(0, 0, 0), (1, 0, 0), (0, 1, 0)]]), (0, 0, 5))
    assert ray_mesh_last_hit(Ray(np.array([5.0, 5, -1]), np.array([5.0, 5, 1])), mesh) is None
    c = mesh.centroids[0]
    assert ray_mesh_last_hit(Ray(c - [0, 0, 1], c + [0, 0, 1]), mesh) == 1
    assert ray_mesh_last_hit(Ray(c - [0, 0, 1], c + [0, 0, 1]), mesh_from_triangles(np.zeros((0, 3, 3)))) is None


def test_last_hit_tie_goes_to_lower_index():
    # two facets sharing an edge; the ray crosses exactly on the edge
    a = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
    b = [(1, 0, 0), (1, 1, 0), (0, 1, 0)]
    mesh = mesh_from_triangles(np.array([a, b]), (0.5, 0.5, 5))
    ray = Ray(np.array([0.5, 0.5, -1.0]), np.array([0.5, 0.5, 1.0]))
    assert ray_mesh_last_hit(ray, mesh) == 1 == ray_mesh_last_hit_bruteforce(ray, mesh)


@pytest.mark.parametrize("seed", range(5))
def test_last_hit_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    mesh = random_mesh(rng, int(rng.integers(1, 40)))
    for _ in range(200):
        ray = random_ray(rng)
        want = ray_mesh_last_hit_bruteforce(ray, mesh)
        assert ray_mesh_last_hit(ray, mesh) == want
        assert ray_mesh_last_hit(ray, mesh, prefilter=False) == want


FOV = np.array([[-5, 5, -16], [5, 5, -16], [5, -5, -16], [-5, -5, -16], [0, 0, 0]], dtype=float)


def test_fov_hull_base_face():
    h = hull_from_fov(FOV)
    assert h.n == 5
    assert h.normals[4] == pytest.approx([0, 0, -1])
    assert h.offsets[4] == pytest.approx(16.0)
    assert point_in_hull((0, 0, -8), h)
    assert not point_in_hull((100, 0, 0), h)


def test_fov_hull_degenerate():
    flat = FOV.copy()
    flat[4] = (0, 0, -16)
    with pytest.raises(DegenerateHull):
        hull_from_fov(flat)


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_fov_hull_contains_convex_combinations(w):
    w = np.array(w) + 1e-6
    w /= w.sum()
    h = hull_from_fov(FOV)
    assert point_in_hull(w @ FOV, h, tol=1e-9)


def test_fov_vertices_pushed_out_are_outside():
    h = hull_from_fov(FOV)
    for v in FOV:
        on = np.abs(h.normals @ v - h.offsets) <= 1e-6
        assert on.sum() >= 3
        for n in h.normals[on]:
            assert not point_in_hull(v + n, h)


def test_point_in_hull_cube():
    n = np.vstack([np.eye(3), -np.eye(3)])
    cube = ConvexHullH(n, np.array([1, 1, 1, 0, 0, 0], dtype=float))
    assert point_in_hull((0.5, 0.5, 0.5), cube)
    assert not point_in_hull((1.5, 0.5, 0.5), cube)
    assert point_in_hull((1 + 0.5e-9, 0.5, 0.5), cube, tol=1e-9)


def test_dodecahedron():
    h = dodecahedron_hull((0, 0, 0), 1.0)
    assert h.n == 12
    assert point_in_hull((0, 0, 0), h)
    rng = np.random.default_rng(0)
    d = rng.normal(size=(500, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    assert not any(point_in_hull(1.01 * x, h) for x in d)
    assert all(point_in_hull(0.5 * x, h) for x in d)
    with pytest.raises(InvalidRadius):
        dodecahedron_hull((0, 0, 0), 0.0)


def test_dodecahedron_is_regular():
    h = dodecahedron_hull((1, 2, 3), 2.0)
    # every face plane sits at the inradius
    assert np.allclose(h.offsets - h.normals @ np.array([1, 2, 3]), 2.0 * 0.7946544722917661)
    cos = h.normals @ h.normals.T
    adj = np.sort(cos, axis=1)[:, -6:-1]  # the five neighbours
    assert np.allclose(adj, 1 / math.sqrt(5))


def test_gaussian_mesh_counts():
    m = gaussian_heightfield_mesh(40, (45, 45), (80, 80), (11, 11), ((20, 70), (20, 70)))
    assert len(m) == 200
    assert m.centroids[:, 2].max() > 35
    assert len(gaussian_heightfield_mesh(40, (45, 45), (80, 80), (12, 11), ((20, 70), (20, 70)))) == 220
    assert len(gaussian_heightfield_mesh(40, (45, 45), (80, 80), (2, 2), ((20, 70), (20, 70)))) == 2
    flat = gaussian_heightfield_mesh(0, (45, 45), (80, 80), (4, 4), ((20, 70), (20, 70)))
    assert np.all(flat.vertices[..., 2] == 0)
    assert np.all(m.normals[:, 2] > 0)  # outward is up


@given(st.integers(2, 9), st.integers(2, 9))
def test_gaussian_mesh_facet_count(nx, ny):
    m = gaussian_heightfield_mesh(40, (45, 45), (80, 80), (nx, ny), ((20, 70), (20, 70)))
    assert len(m) == 2 * (nx - 1) * (ny - 1)
    assert np.allclose(m.centroids, m.vertices.mean(axis=1))


def test_hull_from_points_cube():
    pts = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    h = hull_from_points(pts)
    assert h.n == 6
    assert point_in_hull((0.5, 0.5, 0.5), h)
    assert np.all(h.margins(pts) <= 1e-9)
