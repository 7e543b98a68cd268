"""Box tetrahedral meshes, well segments, 1D line meshes and point location."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from . import _kernels


class MeshError(ValueError):
    pass


class PointNotFoundError(LookupError):
    """Raised when a query point lies outside every cell of a mesh."""


def _constant_one(s):
    return np.ones_like(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class WellSegment:
    """Straight well of radius ``R`` with centreline from ``a`` to ``b``.

    ``beta_profile`` is the lateral inflow coefficient as a function of the
    arclength ``s`` measured from ``a``.
    """

    a: np.ndarray
    b: np.ndarray
    R: float
    beta_profile: Callable = _constant_one

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(3)
        b = np.asarray(self.b, dtype=float).reshape(3)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not self.R > 0:
            raise ValueError(f"well radius must be positive, got {self.R}")
        if not np.linalg.norm(b - a) > 0:
            raise ValueError("well segment has zero length")

    @property
    def L(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    @property
    def tau(self) -> np.ndarray:
        return (self.b - self.a) / self.L

    @property
    def kappa_hat(self) -> float:
        return self.R**2 / 8.0

    def point_at(self, s):
        s = np.asarray(s, dtype=float)
        return self.a + s[..., None] * self.tau

    def arclength(self, x):
        """Unclamped projection parameter of ``x`` onto the centreline."""
        return (np.asarray(x, dtype=float) - self.a) @ self.tau

    def normal_frame(self) -> tuple[np.ndarray, np.ndarray]:
        """Two unit vectors completing ``tau`` to an orthonormal frame."""
        t = self.tau
        helper = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(t, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(t, e1)
        return e1, e2


def dist_to_segment(x, seg: WellSegment):
    """Euclidean distance from point(s) ``x`` to the closed segment ``[a, b]``."""
    x = np.asarray(x, dtype=float)
    t = np.clip(seg.arclength(x), 0.0, seg.L)
    closest = seg.a + t[..., None] * seg.tau
    return np.linalg.norm(x - closest, axis=-1)


@dataclass(frozen=True)
class LineMesh1D:
    segment: WellSegment
    vertices: np.ndarray
    cells: np.ndarray
    arc_coords: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.arc_coords)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def cell_lengths(self) -> np.ndarray:
        return np.diff(self.arc_coords)

    @property
    def h(self) -> float:
        return float(self.cell_lengths.max())


def build_line_mesh(seg: WellSegment, m: int, breakpoints=()) -> LineMesh1D:
    """Equispaced mesh of ``seg`` with ``m`` cells.

    ``breakpoints`` (arclengths) are required to be vertices; a ``MeshError``
    is raised if the uniform mesh misses one.
    """
    if m < 1:
        raise ValueError(f"line mesh needs at least one cell, got m={m}")
    s = seg.L * np.arange(m + 1) / m
    for bp in breakpoints:
        if np.min(np.abs(s - bp)) > 1e-12 * max(seg.L, 1.0):
            raise MeshError(f"breakpoint s={bp} is not a vertex of the {m}-cell line mesh")
    cells = np.column_stack([np.arange(m), np.arange(1, m + 1)])
    return LineMesh1D(seg, seg.point_at(s), cells, s)


# Kuhn split: one tetrahedron per axis permutation, all sharing the main diagonal
_KUHN = []
for _perm in itertools.permutations(range(3)):
    _corner = [0, 0, 0]
    _path = [tuple(_corner)]
    for _ax in _perm:
        _corner[_ax] = 1
        _path.append(tuple(_corner))
    _KUHN.append(_path)


@dataclass(frozen=True, eq=False)
class TetMesh3D:
    vertices: np.ndarray
    cells: np.ndarray
    box: tuple = field(default=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)))
    divisions: tuple | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def jacobians(self) -> np.ndarray:
        v = self.vertices[self.cells]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=-1)

    @cached_property
    def signed_volumes(self) -> np.ndarray:
        return np.linalg.det(self.jacobians) / 6.0

    @property
    def volumes(self) -> np.ndarray:
        return np.abs(self.signed_volumes)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the four barycentric hats on every cell, shape (cells, 4, 3)."""
        inv = self.inverse_jacobians
        g = np.empty((self.n_cells, 4, 3))
        g[:, 1:, :] = inv
        g[:, 0, :] = -inv.sum(axis=1)
        return g

    @cached_property
    def diameters(self) -> np.ndarray:
        v = self.vertices[self.cells]
        d = np.zeros(self.n_cells)
        for i, j in itertools.combinations(range(4), 2):
            d = np.maximum(d, np.linalg.norm(v[:, i] - v[:, j], axis=1))
        return d

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted faces and how many cells share each."""
        local = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
        f = np.concatenate([self.cells[:, list(lf)] for lf in local])
        f = np.sort(f, axis=1)
        uniq, counts = np.unique(f, axis=0, return_counts=True)
        return uniq, counts

    @cached_property
    def boundary_faces(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary faces and their box-side markers (0..5 = x-, x+, y-, y+, z-, z+)."""
        uniq, counts = self.faces
        bf = uniq[counts == 1]
        lo, hi = np.asarray(self.box[0]), np.asarray(self.box[1])
        pts = self.vertices[bf]
        markers = np.full(len(bf), -1)
        tol = 1e-12 * max(1.0, float(np.max(hi - lo)))
        for ax in range(3):
            markers[np.all(np.abs(pts[:, :, ax] - lo[ax]) < tol, axis=1)] = 2 * ax
            markers[np.all(np.abs(pts[:, :, ax] - hi[ax]) < tol, axis=1)] = 2 * ax + 1
        return bf, markers

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_faces[0])

    @cached_property
    def locator(self) -> "CellLocator":
        return CellLocator(self)

    def locate_cell(self, x, tol: float = 1e-10):
        return locate_cell(x, self, tol)

    def write_vtk(self, path, point_data: dict | None = None) -> None:
        write_vtk(path, self, point_data)


def build_box_mesh(n, box=((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))) -> TetMesh3D:
    """Uniform Kuhn-split tetrahedral mesh with ``n`` cubes per axis (or a 3-tuple)."""
    ns = (n, n, n) if np.isscalar(n) else tuple(n)
    if any(int(k) != k or k < 1 for k in ns):
        raise ValueError(f"subdivisions must be positive integers, got {n!r}")
    nx, ny, nz = (int(k) for k in ns)
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("box upper bounds must exceed lower bounds")
    axes = [lo[d] + (hi[d] - lo[d]) * np.arange(k + 1) / k for d, k in enumerate((nx, ny, nz))]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    cells = []
    for path in _KUHN:
        cells.append(np.column_stack([vid(I + di, J + dj, K + dk) for di, dj, dk in path]))
    cells = np.stack(cells, axis=1).reshape(-1, 4)
    mesh = TetMesh3D(vertices, cells, (tuple(lo), tuple(hi)), (nx, ny, nz))
    neg = mesh.signed_volumes < 0
    if neg.any():
        cells = cells.copy()
        cells[neg, 2], cells[neg, 3] = cells[neg, 3].copy(), cells[neg, 2].copy()
        mesh = TetMesh3D(vertices, cells, (tuple(lo), tuple(hi)), (nx, ny, nz))
    return mesh


class CellLocator:
    """Uniform background grid of cell bounding boxes.

    Bucket size is at least the largest cell extent, so each cell is
    registered in at most 8 buckets.
    """

    def __init__(self, mesh: TetMesh3D):
        self.mesh = mesh
        v = mesh.vertices[mesh.cells]
        cmin = v.min(axis=1)
        cmax = v.max(axis=1)
        self.lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        extent = (cmax - cmin).max(axis=0)
        span = np.maximum(hi - self.lo, 1e-300)
        self.shape = np.maximum(1, np.floor(span / np.maximum(extent, 1e-300))).astype(int)
        self.step = span / self.shape
        bmin = self._bucket_coords(cmin)
        bmax = self._bucket_coords(cmax)
        entries_b = []
        entries_c = []
        cell_ids = np.arange(mesh.n_cells)
        for dx, dy, dz in itertools.product((0, 1), repeat=3):
            b = np.minimum(bmin + np.array([dx, dy, dz]), bmax)
            entries_b.append(self._flat(b))
            entries_c.append(cell_ids)
        eb = np.concatenate(entries_b)
        ec = np.concatenate(entries_c)
        pairs = np.unique(np.column_stack([eb, ec]), axis=0)
        nb = int(np.prod(self.shape))
        self.bucket_ptr = np.zeros(nb + 1, dtype=np.int64)
        np.add.at(self.bucket_ptr, pairs[:, 0] + 1, 1)
        self.bucket_ptr = np.cumsum(self.bucket_ptr)
        self.bucket_cells = pairs[:, 1].astype(np.int64)
        self.origin = np.ascontiguousarray(mesh.vertices[mesh.cells[:, 0]])
        self.inv_maps = np.ascontiguousarray(mesh.inverse_jacobians)

    def _bucket_coords(self, x):
        b = np.floor((x - self.lo) / self.step).astype(int)
        return np.clip(b, 0, self.shape - 1)

    def _flat(self, b):
        return (b[..., 0] * self.shape[1] + b[..., 1]) * self.shape[2] + b[..., 2]

    def locate(self, points, tol: float = 1e-10):
        """Cell index and barycentric coordinates for each point; -1 if not found."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        raw = np.floor((points - self.lo) / self.step).astype(int)
        pad = 1e-9 * self.step
        outside = np.any((points < self.lo - pad) | (points > self.lo + self.shape * self.step + pad), axis=1)
        buckets = self._flat(np.clip(raw, 0, self.shape - 1)).astype(np.int64)
        buckets[outside] = -1
        return _kernels.locate(points, buckets, self.bucket_ptr, self.bucket_cells, self.origin, self.inv_maps, tol)


def locate_cell(x, mesh: TetMesh3D, tol: float = 1e-10):
    """Index of a cell containing ``x`` (all barycentric coordinates >= -tol).

    Accepts a single point or an array of points; raises
    ``PointNotFoundError`` if any point is outside the mesh.
    """
    x = np.asarray(x, dtype=float)
    cells, _ = mesh.locator.locate(x, tol)
    if np.any(cells < 0):
        bad = np.atleast_2d(x)[cells < 0][0]
        raise PointNotFoundError(f"point {bad} is not inside any cell")
    return int(cells[0]) if x.ndim == 1 else cells


def barycentric(x, mesh: TetMesh3D, cell: int) -> np.ndarray:
    lam = mesh.inverse_jacobians[cell] @ (np.asarray(x, dtype=float) - mesh.vertices[mesh.cells[cell, 0]])
    return np.concatenate([[1.0 - lam.sum()], lam])


def write_vtk(path, mesh: TetMesh3D, point_data: dict | None = None) -> None:
    """Legacy ASCII VTK 3.0 unstructured grid with tetra cells (type 10)."""
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", "srbfem mesh", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines.extend(" ".join(repr(float(c)) for c in p) for p in mesh.vertices)
    lines.append(f"CELLS {mesh.n_cells} {5 * mesh.n_cells}")
    lines.extend("4 " + " ".join(str(int(i)) for i in c) for c in mesh.cells)
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["10"] * mesh.n_cells)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_vertices,):
                raise ValueError(f"point field {name!r} has shape {values.shape}, expected ({mesh.n_vertices},)")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(repr(float(v)) for v in values)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def read_vtk(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read back a file produced by :func:`write_vtk`."""
    tokens = Path(path).read_text().split("\n")
    i = 0
    points = cells = None
    data = {}
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            points = np.array([[float(t) for t in tokens[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("CELLS"):
            n = int(line.split()[1])
            cells = np.array([[int(t) for t in tokens[i + 1 + k].split()[1:]] for k in range(n)])
            i += n
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            n = len(points)
            data[name] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return points, cells, data
