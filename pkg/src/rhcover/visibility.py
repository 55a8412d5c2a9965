"""Grid decomposition of the environment and the learned cell/facet visibility table.

Table file layout (``VIS1``)::

    b"VIS1"
    7 x u32 little-endian: nx, ny, nz, n_facets, samples_per_cell, rays_per_pose, seed
    32 bytes: provenance digest (mesh, grid bounds, camera, gimbal, ray scheme)
    ceil(n_cells * n_facets / 8) bytes: packed bits, row-major by cell, LSB first
"""
from __future__ import annotations

import hashlib
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import CameraIntrinsics, GimbalSet, base_lattice, precompute_fovs
from .errors import FormatError, OutOfEnvironment, StaleTable
from .geometry import Mesh, last_hits

MAGIC = b"VIS1"
_HEADER = struct.Struct("<4s7I32s")


@dataclass(frozen=True)
class GridDecomposition:
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    dims: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))
        if any(d < 1 for d in self.dims):
            raise ValueError("grid dims must be positive")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("empty environment box")

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def cell_size(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.dims)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= np.array(self.lower) - tol) and np.all(p <= np.array(self.upper) + tol))

    def cell_coords(self, p) -> tuple[int, int, int]:
        p = np.asarray(p, dtype=float)
        if not self.contains(p):
            raise OutOfEnvironment(f"point {p} outside environment {self.lower}..{self.upper}")
        t = (p - np.array(self.lower)) / self.cell_size
        # points on a shared face belong to the lower-index cell
        ijk = np.maximum(np.ceil(t).astype(int) - 1, 0)
        ijk = np.minimum(ijk, np.array(self.dims) - 1)
        return tuple(int(v) for v in ijk)

    def index_of(self, ijk) -> int:
        i, j, k = ijk
        nx, ny, _ = self.dims
        return 1 + i + nx * (j + ny * k)

    def coords_of(self, c_hat: int) -> tuple[int, int, int]:
        nx, ny, _ = self.dims
        c = c_hat - 1
        return c % nx, (c // nx) % ny, c // (nx * ny)

    def cell_box(self, c_hat: int) -> tuple[np.ndarray, np.ndarray]:
        ijk = np.array(self.coords_of(c_hat))
        lo = np.array(self.lower) + ijk * self.cell_size
        return lo, lo + self.cell_size

    def cells_overlapping(self, lo, hi) -> list[int]:
        """1-based indices of all (closed) cells meeting the box [lo, hi]."""
        lo = np.maximum(np.asarray(lo, dtype=float), self.lower)
        hi = np.minimum(np.asarray(hi, dtype=float), self.upper)
        if np.any(lo > hi):
            return []
        size = self.cell_size
        # a box edge on a shared face touches the cells on both sides
        first = np.ceil((lo - np.array(self.lower)) / size).astype(int) - 1
        last = np.floor((hi - np.array(self.lower)) / size).astype(int)
        first = np.clip(first, 0, np.array(self.dims) - 1)
        last = np.clip(last, first, np.array(self.dims) - 1)
        out = []
        for k in range(first[2], last[2] + 1):
            for j in range(first[1], last[1] + 1):
                for i in range(first[0], last[0] + 1):
                    out.append(self.index_of((i, j, k)))
        return sorted(out)


def cell_index(p, grid: GridDecomposition) -> int:
    return grid.index_of(grid.cell_coords(p))


@dataclass(frozen=True)
class VisibilityLearningConfig:
    samples_per_cell: int = 100
    rays_per_pose: int = 50
    seed: int = 0
    ray_scheme: str = "uniform-grid"

    def __post_init__(self):
        if self.samples_per_cell < 1 or self.rays_per_pose < 1:
            raise ValueError("samples_per_cell and rays_per_pose must be positive")
        if not 0 <= self.seed < 2**32:
            raise ValueError("seed must fit in 32 bits")
        if self.ray_scheme not in ("uniform-grid", "seeded-random"):
            raise ValueError(f"unknown ray scheme {self.ray_scheme!r}")


@dataclass(frozen=True)
class Witness:
    """A sampled pose and one of its rays whose last hit is the facet."""

    position: np.ndarray
    xi_index: int
    origin: np.ndarray
    endpoint: np.ndarray


@dataclass
class VisibilityTable:
    rho: np.ndarray  # (n_cells, n_facets) uint8
    dims: tuple[int, int, int]
    config: VisibilityLearningConfig
    digest: bytes
    witnesses: dict[tuple[int, int], Witness] = field(default_factory=dict, repr=False)

    @property
    def n_facets(self) -> int:
        return self.rho.shape[1]

    def visible(self, c_hat: int, tau_hat: int) -> bool:
        return bool(self.rho[c_hat - 1, tau_hat - 1])

    def check(self, digest: bytes, dims=None) -> None:
        if dims is not None and tuple(dims) != tuple(self.dims):
            raise StaleTable(f"table grid {self.dims} does not match scenario grid {tuple(dims)}")
        if digest != self.digest:
            raise StaleTable("table was learned for a different mesh/grid/camera; rerun precompute-visibility")


def provenance_digest(mesh: Mesh, grid: GridDecomposition, gimbal: GimbalSet, cam: CameraIntrinsics, scheme: str) -> bytes:
    h = hashlib.sha256()
    h.update(mesh.digest())
    h.update(np.array(grid.lower + grid.upper, dtype="<f8").tobytes())
    h.update(np.array(grid.dims, dtype="<i8").tobytes())
    h.update(np.array([cam.length, cam.width, cam.range], dtype="<f8").tobytes())
    h.update(np.array(gimbal.thetas, dtype="<f8").tobytes())
    h.update(b"|")
    h.update(np.array(gimbal.phis, dtype="<f8").tobytes())
    h.update(scheme.encode())
    return h.digest()


def _box_distance(lo, hi, blo, bhi) -> float:
    gap = np.maximum(0.0, np.maximum(blo - hi, lo - bhi))
    return float(np.linalg.norm(gap))


def _learn_cell(c_hat, grid, mesh, rotated, cfg, reach, mesh_box):
    """Visible facet positions and their witnesses for one cell."""
    lo, hi = grid.cell_box(c_hat)
    if _box_distance(lo, hi, *mesh_box) > reach:
        return {}
    n = cfg.rays_per_pose
    width = 4 + (2 * n if cfg.ray_scheme == "seeded-random" else 0)
    rng = np.random.default_rng(cfg.seed ^ c_hat)
    # one row per pose keeps draws prefix-stable in samples_per_cell
    draws = rng.random((cfg.samples_per_cell, width))
    pos = lo + draws[:, :3] * (hi - lo)
    xi = np.minimum((draws[:, 3] * len(rotated)).astype(int), len(rotated) - 1)
    if cfg.ray_scheme == "uniform-grid":
        frac = np.broadcast_to(base_lattice(n), (len(pos), n, 2))
    else:
        frac = draws[:, 4:].reshape(len(pos), n, 2)
    corners = rotated[xi][:, :4]  # (P, 4, 3)
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 3] - corners[:, 0]
    origins = (
        corners[:, None, 0] + frac[..., :1] * e1[:, None, :] + frac[..., 1:] * e2[:, None, :] + pos[:, None, :]
    )
    endpoints = np.broadcast_to(pos[:, None, :], origins.shape)
    hits = last_hits(origins.reshape(-1, 3), endpoints.reshape(-1, 3), mesh)
    found = {}
    for r in np.nonzero(hits >= 0)[0]:
        tau = int(hits[r])
        if tau not in found:
            pose = r // n
            found[tau] = Witness(pos[pose].copy(), int(xi[pose]) + 1, origins.reshape(-1, 3)[r].copy(), pos[pose].copy())
    return found


def learn_visibility(
    grid: GridDecomposition,
    mesh: Mesh,
    gimbal: GimbalSet,
    cam: CameraIntrinsics,
    cfg: VisibilityLearningConfig,
    workers: int = 1,
) -> VisibilityTable:
    """Learn which facets can be seen from each cell by random ray casting.

    Every cell draws ``samples_per_cell`` poses (position uniform in the
    cell, configuration uniform over the gimbal set) from its own generator
    seeded with ``seed ^ cell_index``, casts the pose's light rays and marks
    every facet that some ray hits last. Cells farther from the mesh than
    the longest light ray are skipped: no ray from them can reach a facet.
    """
    rho = np.zeros((grid.n_cells, len(mesh)), dtype=np.uint8)
    digest = provenance_digest(mesh, grid, gimbal, cam, cfg.ray_scheme)
    table = VisibilityTable(rho, grid.dims, cfg, digest)
    if len(mesh) == 0:
        return table
    rotated = np.stack([f.rotated for f in precompute_fovs(gimbal, cam)])
    mesh_box = mesh.bounds()
    reach = cam.max_ray_length + 1e-9

    def work(c_hat):
        return c_hat, _learn_cell(c_hat, grid, mesh, rotated, cfg, reach, mesh_box)

    cells = range(1, grid.n_cells + 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(work, cells))
    else:
        results = [work(c) for c in cells]
    for c_hat, found in results:
        for tau, wit in found.items():
            rho[c_hat - 1, tau] = 1
            table.witnesses[(c_hat, tau + 1)] = wit
    return table


def save_table(table: VisibilityTable, path) -> None:
    nx, ny, nz = table.dims
    cfg = table.config
    header = _HEADER.pack(
        MAGIC, nx, ny, nz, table.n_facets, cfg.samples_per_cell, cfg.rays_per_pose, cfg.seed, table.digest
    )
    bits = np.packbits(table.rho.astype(bool).ravel(), bitorder="little")
    Path(path).write_bytes(header + bits.tobytes())


def load_table(path, digest: bytes | None = None, dims=None, ray_scheme: str = "uniform-grid") -> VisibilityTable:
    """Read a ``VIS1`` file; with ``digest``/``dims`` given, reject stale tables."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, nx, ny, nz, n_facets, n_r, n_rays, seed, file_digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a VIS1 file")
    n_bits = nx * ny * nz * n_facets
    expected = _HEADER.size + math.ceil(n_bits / 8)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    try:
        cfg = VisibilityLearningConfig(n_r, n_rays, seed, ray_scheme)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size), count=n_bits, bitorder="little")
    rho = bits.reshape(nx * ny * nz, n_facets).astype(np.uint8)
    table = VisibilityTable(rho, (nx, ny, nz), cfg, file_digest)
    if digest is not None:
        table.check(digest, dims)
    return table
