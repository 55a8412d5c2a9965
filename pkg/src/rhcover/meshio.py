"""Mesh import/export: ASCII STL and a ``v``/``f`` line format (1-based)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MeshFormatError
from .geometry import Mesh, make_facet, mesh_from_triangles


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_obj(mesh: Mesh, path) -> None:
    verts: dict[tuple, int] = {}
    faces = []
    for f in mesh.facets:
        ids = []
        for v in f.vertices:
            key = tuple(float(c) for c in v)
            if key not in verts:
                verts[key] = len(verts) + 1
            ids.append(verts[key])
        faces.append(ids)
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for (x, y, z) in verts]
    lines += [f"f {i} {j} {k}" for i, j, k in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path, reference_outside_point=None) -> Mesh:
    verts, faces = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                verts.append([float(t) for t in rest[:3]])
                if len(rest) < 3:
                    raise ValueError
            elif tag == "f":
                # accept "i/j/k" style tokens by keeping the vertex part
                idx = [int(t.split("/")[0]) for t in rest]
                if len(idx) != 3:
                    raise ValueError
                faces.append(idx)
            else:
                raise MeshFormatError(f"{path}:{lineno}: unknown record {tag!r}")
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: malformed {tag!r} record") from None
    try:
        tris = np.array([[verts[i - 1] for i in f] for f in faces], dtype=float)
    except IndexError:
        raise MeshFormatError(f"{path}: face refers to a missing vertex") from None
    if any(i < 1 for f in faces for i in f):
        raise MeshFormatError(f"{path}: vertex indices are 1-based")
    return mesh_from_triangles(tris.reshape(-1, 3, 3), reference_outside_point)


def write_stl(mesh: Mesh, path, name: str = "object") -> None:
    out = [f"solid {name}"]
    for f in mesh.facets:
        n = f.plane.normal
        out.append(f"  facet normal {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")
        out.append("    outer loop")
        for v in f.vertices:
            out.append(f"      vertex {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
        out.append("    endloop")
        out.append("  endfacet")
    out.append(f"endsolid {name}")
    Path(path).write_text("\n".join(out) + "\n")


def read_stl(path) -> Mesh:
    """Read ASCII STL; the stored facet normal fixes the outward side."""
    tris, refs = [], []
    normal, loop = None, []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        tok = raw.split()
        if not tok:
            continue
        try:
            if tok[0] == "facet":
                normal = np.array([float(t) for t in tok[2:5]])
                loop = []
            elif tok[0] == "vertex":
                loop.append([float(t) for t in tok[1:4]])
            elif tok[0] == "endfacet":
                if normal is None or len(loop) != 3:
                    raise ValueError
                tri = np.array(loop)
                if np.linalg.norm(normal) < 1e-12:
                    # unset normal: fall back to the winding
                    normal = np.cross(tri[1] - tri[0], tri[2] - tri[0])
                tris.append(tri)
                refs.append(tri.mean(axis=0) + normal)
                normal = None
        except (ValueError, IndexError):
            raise MeshFormatError(f"{path}:{lineno}: malformed STL record") from None
    return Mesh(tuple(make_facet(t, k, r) for k, (t, r) in enumerate(zip(tris, refs), start=1)))


def read_mesh(path) -> Mesh:
    path = Path(path)
    if path.suffix.lower() == ".stl":
        return read_stl(path)
    return read_obj(path)
