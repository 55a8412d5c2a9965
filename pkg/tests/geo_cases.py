"""Random meshes and rays for the geometry oracles."""
import numpy as np

from rhcover.geometry import Ray, mesh_from_triangles


def random_mesh(rng, n_facets, box=10.0):
    """Up to ``n_facets`` random non-degenerate triangles inside [0, box]^3."""
    tris = []
    while len(tris) < n_facets:
        t = rng.uniform(0.0, box, size=(3, 3))
        if np.linalg.norm(np.cross(t[1] - t[0], t[2] - t[0])) > 1e-2:
            tris.append(t)
    return mesh_from_triangles(np.array(tris))


def random_ray(rng, box=10.0):
    while True:
        a, b = rng.uniform(-0.2 * box, 1.2 * box, size=(2, 3))
        if np.linalg.norm(b - a) > 1e-3:
            return Ray(a, b)
