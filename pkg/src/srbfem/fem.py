"""P1 Lagrange spaces on tetrahedral and line meshes, DG0 on line meshes,
quadrature, standard assembly and (weighted) norms."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from .geometry import LineMesh1D, TetMesh3D, dist_to_segment

# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TetRule:
    """Quadrature on the reference tetrahedron in barycentric form.

    Weights sum to 1, so integrals are ``vol * sum(w * f)``.
    """

    bary: np.ndarray  # (Q, 4)
    weights: np.ndarray  # (Q,)
    degree: int


def _orbit(*coords):
    return np.array(sorted(set(itertools.permutations(coords))))


@lru_cache(maxsize=None)
def tet_rule(degree: int) -> TetRule:
    if degree <= 1:
        return TetRule(np.full((1, 4), 0.25), np.ones(1), 1)
    if degree == 2:
        a = (5.0 - np.sqrt(5.0)) / 20.0
        b = 1.0 - 3.0 * a
        return TetRule(_orbit(b, a, a, a), np.full(4, 0.25), 2)
    if degree <= 5:
        # Keast, 15 points, positive weights
        b1 = 1.0 / 11.0
        b2 = 0.0665501535736642813
        c2 = 0.5 - b2
        pts = np.vstack([
            np.full((1, 4), 0.25),
            _orbit(0.0, 1 / 3, 1 / 3, 1 / 3),
            _orbit(1.0 - 3.0 * b1, b1, b1, b1),
            _orbit(b2, b2, c2, c2),
        ])
        w = np.concatenate([
            [0.1817020685825351],
            np.full(4, 0.0361607142857143),
            np.full(4, 0.0698714945161738),
            np.full(6, 0.0656948493683187),
        ])
        return TetRule(pts, w / w.sum(), 5)
    raise ValueError(f"no tetrahedral rule of degree {degree}")


@lru_cache(maxsize=None)
def composite_tet_rule(degree: int, levels: int) -> TetRule:
    """``tet_rule(degree)`` repeated on the 8**levels children of uniform red refinement."""
    base = tet_rule(degree)
    if levels == 0:
        return base
    # red refinement in barycentric coordinates: 4 corner children + 4 from the octahedron
    e = np.eye(4)
    mid = {(i, j): 0.5 * (e[i] + e[j]) for i, j in itertools.combinations(range(4), 2)}
    m = lambda i, j: mid[(min(i, j), max(i, j))]  # noqa: E731
    children = [
        [e[0], m(0, 1), m(0, 2), m(0, 3)],
        [m(0, 1), e[1], m(1, 2), m(1, 3)],
        [m(0, 2), m(1, 2), e[2], m(2, 3)],
        [m(0, 3), m(1, 3), m(2, 3), e[3]],
        [m(0, 1), m(0, 2), m(0, 3), m(1, 3)],
        [m(0, 1), m(0, 2), m(1, 2), m(1, 3)],
        [m(0, 2), m(0, 3), m(1, 3), m(2, 3)],
        [m(0, 2), m(1, 2), m(1, 3), m(2, 3)],
    ]
    coarse = composite_tet_rule(degree, levels - 1)
    pts = [coarse.bary @ np.array(ch) for ch in children]
    return TetRule(np.vstack(pts), np.tile(coarse.weights, 8) / 8.0, base.degree)


def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def quadrature_points(mesh: TetMesh3D, rule: TetRule, cells=None) -> np.ndarray:
    cells = np.arange(mesh.n_cells) if cells is None else cells
    v = mesh.vertices[mesh.cells[cells]]
    return np.einsum("qi,cik->cqk", rule.bary, v)


# --------------------------------------------------------------------------
# spaces
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FESpace3D:
    mesh: TetMesh3D

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def dof_coords(self) -> np.ndarray:
        return self.mesh.vertices

    @property
    def boundary_dofs(self) -> np.ndarray:
        return self.mesh.boundary_vertices

    def interpolate(self, fn) -> np.ndarray:
        return np.asarray(fn(self.dof_coords), dtype=float)

    def evaluate(self, coeffs, points) -> np.ndarray:
        cells, bary = self.mesh.locator.locate(np.atleast_2d(points))
        if np.any(cells < 0):
            raise LookupError("evaluation point outside the mesh")
        return np.einsum("pi,pi->p", bary, np.asarray(coeffs)[self.mesh.cells[cells]])


@dataclass(frozen=True, eq=False)
class FESpace1D:
    mesh: LineMesh1D

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_vertices

    @property
    def boundary_dofs(self) -> np.ndarray:
        return np.array([0, self.mesh.n_vertices - 1])

    def interpolate(self, fn_of_s) -> np.ndarray:
        return np.asarray(fn_of_s(self.mesh.arc_coords), dtype=float)

    def evaluate(self, coeffs, s) -> np.ndarray:
        return np.interp(s, self.mesh.arc_coords, coeffs)


@dataclass(frozen=True, eq=False)
class DG0Space1D:
    mesh: LineMesh1D

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_cells


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _scatter(cells: np.ndarray, local: np.ndarray, shape) -> sparse.csr_matrix:
    rows = np.broadcast_to(cells[:, :, None], local.shape)
    cols = np.broadcast_to(cells[:, None, :], local.shape)
    m = sparse.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def assemble_stiffness_3d(space: FESpace3D, coeff=None) -> sparse.csr_matrix:
    """A[i, k] = int coeff grad(phi_k) . grad(phi_i).

    ``coeff`` may be ``None`` (one), a scalar, or a callable of points; callables
    are integrated with the degree-2 rule.
    """
    mesh = space.mesh
    g = mesh.basis_gradients
    vol = mesh.volumes
    if coeff is None:
        cbar = np.ones(mesh.n_cells)
    elif callable(coeff):
        rule = tet_rule(2)
        cbar = np.asarray(coeff(quadrature_points(mesh, rule).reshape(-1, 3))).reshape(mesh.n_cells, -1) @ rule.weights
    else:
        cbar = np.full(mesh.n_cells, float(coeff))
    local = np.einsum("c,cik,cjk->cij", cbar * vol, g, g)
    return _scatter(mesh.cells, local, (space.n_dofs, space.n_dofs))


def assemble_mass_3d(space: FESpace3D) -> sparse.csr_matrix:
    mesh = space.mesh
    ref = (np.ones((4, 4)) + np.eye(4)) / 20.0
    local = mesh.volumes[:, None, None] * ref[None]
    return _scatter(mesh.cells, local, (space.n_dofs, space.n_dofs))


def _coeff_at(coeff, s):
    if coeff is None:
        return np.ones_like(s)
    if callable(coeff):
        return np.broadcast_to(np.asarray(coeff(s), dtype=float), s.shape)
    return np.full_like(s, float(coeff))


def _line_quadrature(mesh: LineMesh1D, order: int):
    xi, w = gauss_1d(order)
    s0 = mesh.arc_coords[:-1]
    hl = mesh.cell_lengths
    s = s0[:, None] + hl[:, None] * xi[None, :]
    hats = np.stack([1.0 - xi, xi], axis=1)  # (Q, 2)
    return s, w, hats, hl


def assemble_stiffness_1d(space: FESpace1D, coeff=None, order: int = 3) -> sparse.csr_matrix:
    mesh = space.mesh
    s, w, _, hl = _line_quadrature(mesh, order)
    cbar = _coeff_at(coeff, s) @ w
    ref = np.array([[1.0, -1.0], [-1.0, 1.0]])
    local = (cbar / hl)[:, None, None] * ref[None]
    return _scatter(mesh.cells, local, (space.n_dofs, space.n_dofs))


def assemble_mass_1d_p1p1(space: FESpace1D, coeff=None, order: int = 3) -> sparse.csr_matrix:
    """M[j, l] = int_Lambda coeff phi_j phi_l ds, cellwise Gauss with ``order`` points."""
    mesh = space.mesh
    s, w, hats, hl = _line_quadrature(mesh, order)
    c = _coeff_at(coeff, s)
    local = np.einsum("cq,q,qi,qj->cij", c * hl[:, None], w, hats, hats)
    return _scatter(mesh.cells, local, (space.n_dofs, space.n_dofs))


def assemble_mass_1d_dg0p1(dg: DG0Space1D, p1: FESpace1D, coeff=None, order: int = 3) -> sparse.csr_matrix:
    """N[m, l] = int_{I_m} coeff phi_l ds (rows: DG0 cells, columns: P1 vertices)."""
    if dg.mesh is not p1.mesh:
        raise ValueError("DG0 and P1 spaces must share one line mesh")
    mesh = p1.mesh
    s, w, hats, hl = _line_quadrature(mesh, order)
    c = _coeff_at(coeff, s)
    vals = np.einsum("cq,q,qi->ci", c * hl[:, None], w, hats)
    rows = np.repeat(np.arange(mesh.n_cells), 2)
    return sparse.csr_matrix((vals.ravel(), (rows, mesh.cells.ravel())), shape=(dg.n_dofs, p1.n_dofs))


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

def _field_at(field, mesh: TetMesh3D, rule: TetRule, cells):
    if callable(field):
        pts = quadrature_points(mesh, rule, cells)
        return np.asarray(field(pts.reshape(-1, 3)), dtype=float).reshape(len(cells), -1)
    coeffs = np.asarray(field, dtype=float)
    return coeffs[mesh.cells[cells]] @ rule.bary.T


def _split_cells(mesh, near, refine_levels):
    if near is None or refine_levels == 0:
        return [(np.arange(mesh.n_cells), 0)]
    near = np.asarray(near, dtype=bool)
    return [(np.flatnonzero(~near), 0), (np.flatnonzero(near), refine_levels)]


def norm_L2(field, mesh: TetMesh3D, degree: int = 5, near=None, refine_levels: int = 0) -> float:
    """L2(Omega) norm of a P1 coefficient vector or a callable of points.

    ``near`` marks cells integrated with a composite rule of ``refine_levels``.
    """
    return norm_L2_weighted(field, mesh, 0.0, None, degree, near, refine_levels)


def norm_L2_weighted(field, mesh: TetMesh3D, alpha: float, segment=None, degree: int = 5,
                     near=None, refine_levels: int = 0) -> float:
    """(int u^2 r^(2 alpha))^(1/2) with r the distance to ``segment``."""
    if not -1.0 < alpha < 1.0:
        raise ValueError(f"weight exponent must lie in (-1, 1), got {alpha}")
    if alpha != 0.0 and segment is None:
        raise ValueError("a weighted norm needs the segment defining r")
    total = 0.0
    for cells, levels in _split_cells(mesh, near, refine_levels):
        if len(cells) == 0:
            continue
        rule = composite_tet_rule(degree, levels)
        u = _field_at(field, mesh, rule, cells)
        integrand = u * u
        if alpha != 0.0:
            r = dist_to_segment(quadrature_points(mesh, rule, cells), segment)
            integrand = integrand * r ** (2.0 * alpha)
        total += float(mesh.volumes[cells] @ (integrand @ rule.weights))
    return float(np.sqrt(total))


def norm_H1semi(field, mesh: TetMesh3D, degree: int = 5, grad=None, near=None, refine_levels: int = 0) -> float:
    """|u|_H1 for a P1 coefficient vector, or for a callable with its gradient ``grad``."""
    if not callable(field):
        g = np.einsum("ci,cik->ck", np.asarray(field, dtype=float)[mesh.cells], mesh.basis_gradients)
        return float(np.sqrt(mesh.volumes @ np.einsum("ck,ck->c", g, g)))
    if grad is None:
        raise ValueError("callable fields need an explicit gradient callable")
    total = 0.0
    for cells, levels in _split_cells(mesh, near, refine_levels):
        if len(cells) == 0:
            continue
        rule = composite_tet_rule(degree, levels)
        pts = quadrature_points(mesh, rule, cells).reshape(-1, 3)
        gq = np.asarray(grad(pts)).reshape(len(cells), -1, 3)
        total += float(mesh.volumes[cells] @ (np.einsum("cqk,cqk->cq", gq, gq) @ rule.weights))
    return float(np.sqrt(total))


def norm_L2_line(values_at, mesh: LineMesh1D, order: int = 5) -> float:
    """L2(Lambda) norm of a callable of arclength."""
    s, w, _, hl = _line_quadrature(mesh, order)
    u = np.asarray(values_at(s), dtype=float)
    return float(np.sqrt(np.sum(hl[:, None] * w[None, :] * u * u)))


def norm_H1semi_line(deriv_at, mesh: LineMesh1D, order: int = 5) -> float:
    return norm_L2_line(deriv_at, mesh, order)


def error_L2(exact, coeffs, mesh: TetMesh3D, degree: int = 5, near=None, refine_levels: int = 0) -> float:
    """||exact - u_h||_L2 with ``exact`` a callable and ``u_h`` a P1 coefficient vector."""
    coeffs = np.asarray(coeffs, dtype=float)
    total = 0.0
    for cells, levels in _split_cells(mesh, near, refine_levels):
        if len(cells) == 0:
            continue
        rule = composite_tet_rule(degree, levels)
        e = _field_at(exact, mesh, rule, cells) - _field_at(coeffs, mesh, rule, cells)
        total += float(mesh.volumes[cells] @ ((e * e) @ rule.weights))
    return float(np.sqrt(total))


def error_H1semi(exact_grad, coeffs, mesh: TetMesh3D, degree: int = 5, near=None, refine_levels: int = 0) -> float:
    """|exact - u_h|_H1 given the exact gradient callable."""
    coeffs = np.asarray(coeffs, dtype=float)
    gh = np.einsum("ci,cik->ck", coeffs[mesh.cells], mesh.basis_gradients)
    total = 0.0
    for cells, levels in _split_cells(mesh, near, refine_levels):
        if len(cells) == 0:
            continue
        rule = composite_tet_rule(degree, levels)
        pts = quadrature_points(mesh, rule, cells).reshape(-1, 3)
        d = np.asarray(exact_grad(pts)).reshape(len(cells), -1, 3) - gh[cells][:, None, :]
        total += float(mesh.volumes[cells] @ (np.einsum("cqk,cqk->cq", d, d) @ rule.weights))
    return float(np.sqrt(total))
