"""Mixed-dimensional operators and the two block systems.

Orientation conventions used throughout:

* ``T`` is (N3 x N1): ``T[k, l]`` is the 3D hat ``phi_k`` at 1D vertex ``l``,
  so ``T.T @ v`` is the trace of ``v`` at the 1D vertices.
* ``Pi`` is (M1 x N3): row ``m`` averages a 3D field over the borehole
  surface along 1D cell ``m``.
* ``C`` is (N3 x N1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from . import _kernels
from .fem import (
    DG0Space1D,
    FESpace1D,
    FESpace3D,
    assemble_mass_1d_dg0p1,
    assemble_mass_1d_p1p1,
    assemble_stiffness_1d,
    assemble_stiffness_3d,
    composite_tet_rule,
    gauss_1d,
    quadrature_points,
)
from .geometry import LineMesh1D, PointNotFoundError, WellSegment, dist_to_segment
from .singular import (
    CutoffFunction,
    ExtensionOperator,
    SingularField,
    averaged_potential,
    circle_points,
    correction_factor,
)


@dataclass(eq=False)
class Well:
    """Everything the assembly needs to know about one well."""

    segment: WellSegment
    line_mesh: LineMesh1D
    potential: SingularField
    cutoff: CutoffFunction
    extension: ExtensionOperator
    beta: Callable
    beta_hat: Callable
    kappa_hat: float | None = None

    def __post_init__(self):
        if self.potential.kind == "truncated":
            raise ValueError(
                "the truncated potential is not smooth enough for the solution split; "
                "use it only for well-index comparisons (srbfem.peaceman)")
        if self.line_mesh.segment is not self.segment or self.potential.well is not self.segment:
            raise ValueError("line mesh, potential and well must refer to the same WellSegment")

    @property
    def space(self) -> FESpace1D:
        return FESpace1D(self.line_mesh)

    @property
    def kappa_hat_value(self) -> float:
        return self.segment.kappa_hat if self.kappa_hat is None else self.kappa_hat


@dataclass
class AssemblyParams:
    kappa: float = 1.0
    mu: float = 1.0
    vbar: str = "trace"  # or "average"
    n_theta: int = 16
    quad_degree: int = 5
    near_refine: int = 2  # composite levels on cells touching the well
    near_factor: float = 1.0  # cells with centroid distance <= near_factor * diameter are "near"
    chunk_points: int = 200_000

    def __post_init__(self):
        if self.vbar not in ("trace", "average"):
            raise ValueError(f"vbar must be 'trace' or 'average', got {self.vbar!r}")


@dataclass
class BlockSystem:
    blocks: list  # [[K00, K01], [K10, K11]]
    rhs: np.ndarray
    formulation: str
    bc_dofs: np.ndarray
    bc_values: np.ndarray
    n3: int
    n1: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        (a, b), (c, d) = self.blocks
        n3, n1 = self.n3, self.n1
        if a.shape != (n3, n3) or b.shape != (n3, n1) or c.shape != (n1, n3) or d.shape != (n1, n1):
            raise ValueError(f"inconsistent block shapes {a.shape}, {b.shape}, {c.shape}, {d.shape} "
                             f"for N={n3}, N1={n1}")
        if self.rhs.shape != (n3 + n1,):
            raise ValueError(f"rhs has shape {self.rhs.shape}, expected ({n3 + n1},)")

    def matrix(self) -> sparse.csr_matrix:
        return sparse.bmat(self.blocks, format="csr")


# --------------------------------------------------------------------------
# trace and averaging operators
# --------------------------------------------------------------------------

def _interpolation_matrix(v3: FESpace3D, points: np.ndarray) -> sparse.csr_matrix:
    """(P x N3) matrix evaluating P1 fields at ``points``."""
    cells, bary = v3.mesh.locator.locate(points)
    if np.any(cells < 0):
        bad = points[cells < 0][0]
        raise PointNotFoundError(f"point {bad} lies outside the 3D mesh")
    rows = np.repeat(np.arange(len(points)), 4)
    cols = v3.mesh.cells[cells].ravel()
    vals = bary.ravel()
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(len(points), v3.n_dofs))
    m.eliminate_zeros()
    return m


def trace_matrix(v3: FESpace3D, v1: FESpace1D) -> sparse.csr_matrix:
    """T[k, l] = phi_k(x_l) at the 1D vertices."""
    return _interpolation_matrix(v3, v1.mesh.vertices).T.tocsr()


def averaging_matrix(v3: FESpace3D, dg: DG0Space1D, seg: WellSegment | None = None,
                     n_gauss: int = 3, n_theta: int = 16) -> sparse.csr_matrix:
    """Pi[m, k]: mean over 1D cell m of the borehole-circle average of phi_k."""
    mesh = dg.mesh
    seg = mesh.segment if seg is None else seg
    xi, w = gauss_1d(n_gauss)
    s = mesh.arc_coords[:-1, None] + mesh.cell_lengths[:, None] * xi[None, :]
    pts = circle_points(seg, s.ravel(), n_theta).reshape(-1, 3)
    E = _interpolation_matrix(v3, pts)
    weights = np.repeat(np.tile(w, mesh.n_cells) / n_theta, n_theta)
    rows = np.repeat(np.arange(mesh.n_cells), n_gauss * n_theta)
    W = sparse.csr_matrix((weights, (rows, np.arange(len(pts)))), shape=(mesh.n_cells, len(pts)))
    return (W @ E).tocsr()


def nodal_averaging_matrix(v3: FESpace3D, v1: FESpace1D, n_theta: int = 16) -> sparse.csr_matrix:
    """(N1 x N3): borehole-circle average of each 3D hat at each 1D vertex."""
    seg = v1.mesh.segment
    pts = circle_points(seg, v1.mesh.arc_coords, n_theta).reshape(-1, 3)
    E = _interpolation_matrix(v3, pts)
    rows = np.repeat(np.arange(v1.n_dofs), n_theta)
    W = sparse.csr_matrix((np.full(len(pts), 1.0 / n_theta), (rows, np.arange(len(pts)))),
                          shape=(v1.n_dofs, len(pts)))
    return (W @ E).tocsr()


# --------------------------------------------------------------------------
# corrected coefficients
# --------------------------------------------------------------------------

def _terms(wells: Sequence[Well]):
    return [(w.potential, w.cutoff) for w in wells]


def beta_star_nodal(wells: Sequence[Well], n_theta: int = 16) -> list[np.ndarray]:
    """beta* at the 1D vertices of every well (superposition over all wells)."""
    out = []
    terms = _terms(wells)
    for w in wells:
        s = w.line_mesh.arc_coords
        b = np.asarray(w.beta(s), dtype=float)
        gbar = averaged_potential(terms, w.segment, s, n_theta)
        out.append(b * correction_factor(b, gbar))
    return out


def corrected_coefficient(wells: Sequence[Well], index: int, coeff: Callable, n_theta: int = 16) -> Callable:
    """s -> coeff(s) / (1 + beta(s) Gbar(s)) on well ``index``.

    Applied to beta-hat this gives beta-hat*, which reduces to beta*/(pi R^2)
    when beta-hat = beta/(pi R^2).
    """
    terms = _terms(wells)
    w = wells[index]

    def fn(s):
        s = np.asarray(s, dtype=float)
        flat = s.ravel()
        b = np.asarray(w.beta(flat), dtype=float)
        gbar = averaged_potential(terms, w.segment, flat, n_theta)
        return (np.asarray(coeff(flat), dtype=float) * correction_factor(b, gbar)).reshape(s.shape)

    return fn


# --------------------------------------------------------------------------
# coupling block
# --------------------------------------------------------------------------

def _support_cells(mesh, seg: WellSegment, radius: float):
    if not np.isfinite(radius):
        return np.arange(mesh.n_cells)
    cell_radius = np.linalg.norm(mesh.vertices[mesh.cells] - mesh.centroids[:, None, :], axis=2).max(axis=1)
    d = dist_to_segment(mesh.centroids, seg)
    return np.flatnonzero(d <= radius + cell_radius)


def near_cells(mesh, seg: WellSegment, factor: float = 1.0) -> np.ndarray:
    """Mask of cells whose centroid is within ``factor`` diameters of the segment."""
    return dist_to_segment(mesh.centroids, seg) <= factor * mesh.diameters


def _coupling_single(v3: FESpace3D, well: Well, bstar: np.ndarray, params: AssemblyParams):
    mesh = v3.mesh
    n1 = well.line_mesh.n_vertices
    cells = _support_cells(mesh, well.segment, well.cutoff.support_radius)
    if well.cutoff.kind == "zero" or len(cells) == 0 or not np.any(bstar):
        return sparse.csr_matrix((v3.n_dofs, n1))
    near = near_cells(mesh, well.segment, params.near_factor)[cells]
    rows_all, cols_all, vals_all = [], [], []
    for group, levels in ((cells[~near], 0), (cells[near], params.near_refine)):
        if len(group) == 0:
            continue
        rule = composite_tet_rule(params.quad_degree, levels)
        nq = len(rule.weights)
        chunk = max(1, params.chunk_points // nq)
        for start in range(0, len(group), chunk):
            cc = group[start:start + chunk]
            x = quadrature_points(mesh, rule, cc).reshape(-1, 3)
            G, gG = well.potential.value_and_grad(x)
            psi, gpsi = well.cutoff.value_and_grad(x, well.segment)
            E, gE = well.extension.basis(x)
            E = E * bstar[None, :]
            gE = gE * bstar[None, :, None]
            nc = len(cc)
            local = _kernels.coupling_local(
                G.reshape(nc, nq), gG.reshape(nc, nq, 3), psi.reshape(nc, nq), gpsi.reshape(nc, nq, 3),
                E.reshape(nc, nq, n1), gE.reshape(nc, nq, n1, 3), rule.bary, rule.weights,
                mesh.volumes[cc], mesh.basis_gradients[cc])
            c_idx, i_idx, l_idx = np.nonzero(local)
            rows_all.append(mesh.cells[cc][c_idx, i_idx])
            cols_all.append(l_idx)
            vals_all.append(local[c_idx, i_idx, l_idx])
    if not rows_all:
        return sparse.csr_matrix((v3.n_dofs, n1))
    C = sparse.coo_matrix((np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
                          shape=(v3.n_dofs, n1)).tocsr()
    C.sum_duplicates()
    return C


def coupling_block_C(v3: FESpace3D, wells: Sequence[Well], beta_star: Sequence[np.ndarray] | None = None,
                     params: AssemblyParams | None = None) -> sparse.csr_matrix:
    """C[i, l] = (kappa/mu) [ (F1(beta* phi_l), grad phi_i) - (F2(beta* phi_l), phi_i) ].

    F1(f) = grad(Psi E(f)) G and F2(f) = grad(Psi E(f)) . grad G, per well;
    columns are the 1D dofs of all wells, concatenated.
    """
    params = AssemblyParams() if params is None else params
    if beta_star is None:
        beta_star = beta_star_nodal(wells, params.n_theta)
    blocks = [_coupling_single(v3, w, np.asarray(b, float), params) for w, b in zip(wells, beta_star)]
    return (params.kappa / params.mu) * sparse.hstack(blocks, format="csr")


# --------------------------------------------------------------------------
# block systems
# --------------------------------------------------------------------------

def apply_dirichlet(K: sparse.spmatrix, rhs: np.ndarray, dofs: np.ndarray, values: np.ndarray):
    """Symmetric elimination: lift, zero rows and columns, unit diagonal."""
    K = K.tocsr()
    rhs = np.asarray(rhs, dtype=float).copy()
    g = np.zeros(K.shape[0])
    g[dofs] = values
    rhs -= K @ g
    keep = np.ones(K.shape[0])
    keep[dofs] = 0.0
    D = sparse.diags(keep)
    K = (D @ K @ D).tocsr()
    K = K + sparse.diags(1.0 - keep)
    rhs[dofs] = values
    K.eliminate_zeros()
    return K.tocsr(), rhs


def _split(K, n3):
    K = K.tocsr()
    return [[K[:n3, :n3], K[:n3, n3:]], [K[n3:, :n3], K[n3:, n3:]]]


def _bc_data(v3, wells, bc_3d, bc_1d):
    n3 = v3.n_dofs
    b3 = v3.boundary_dofs
    vals3 = np.asarray(bc_3d(v3.dof_coords[b3]), dtype=float)
    dofs1, vals1 = [], []
    offset = n3
    for i, w in enumerate(wells):
        bd = w.space.boundary_dofs
        fn = bc_1d[i] if isinstance(bc_1d, (list, tuple)) else bc_1d
        dofs1.append(offset + bd)
        vals1.append(np.asarray(fn(w.line_mesh.arc_coords[bd]), dtype=float))
        offset += w.space.n_dofs
    dofs = np.concatenate([b3] + dofs1)
    vals = np.concatenate([vals3] + vals1)
    return dofs, vals


def _one_d_blocks(wells, coeff_fns, params):
    """Block-diagonal (kappa_hat/mu) stiffness and coefficient mass over all wells."""
    stiff, mass = [], []
    for w, fn in zip(wells, coeff_fns):
        sp = w.space
        stiff.append(assemble_stiffness_1d(sp, w.kappa_hat_value / params.mu))
        mass.append(assemble_mass_1d_p1p1(sp, fn, order=5))
    return sparse.block_diag(stiff, format="csr"), sparse.block_diag(mass, format="csr")


def assemble_srb_system(v3: FESpace3D, wells: Sequence[Well], params: AssemblyParams | None = None,
                        bc_3d: Callable | None = None, bc_1d=None) -> BlockSystem:
    """[[A - C V, C], [-M V, A1 + M]] with V the trace (or borehole average) map.

    ``bc_3d`` gives the Dirichlet data of the regular part ``v``; ``bc_1d`` the
    well pressure at the well ends (one callable of s, or one per well).
    """
    params = AssemblyParams() if params is None else params
    bstar = beta_star_nodal(wells, params.n_theta)
    A = assemble_stiffness_3d(v3, params.kappa / params.mu)
    C = coupling_block_C(v3, wells, bstar, params)
    if params.vbar == "trace":
        V = sparse.vstack([trace_matrix(v3, w.space).T for w in wells], format="csr")
    else:
        V = sparse.vstack([nodal_averaging_matrix(v3, w.space, params.n_theta) for w in wells], format="csr")
    coeffs = [corrected_coefficient(wells, i, w.beta_hat, params.n_theta) for i, w in enumerate(wells)]
    A1, M = _one_d_blocks(wells, coeffs, params)
    n3, n1 = v3.n_dofs, A1.shape[0]
    blocks = [[(A - C @ V).tocsr(), C], [(-M @ V).tocsr(), (A1 + M).tocsr()]]
    return _finish(blocks, n3, n1, "srb", v3, wells, bc_3d, bc_1d,
                   info={"beta_star": bstar, "C": C, "V": V, "A": A})


def assemble_standard_system(v3: FESpace3D, wells: Sequence[Well], params: AssemblyParams | None = None,
                             bc_3d: Callable | None = None, bc_1d=None) -> BlockSystem:
    """Direct discretisation of the line-source problem.

    Rows follow the weak form term by term:
    ``[[A + T N_b^T Pi, -T M_b], [-N_bh^T Pi, A1 + M_bh]]`` where ``M_b``/``N_b``
    carry beta and ``M_bh``/``N_bh`` carry beta-hat inside the integrals.
    """
    params = AssemblyParams() if params is None else params
    A = assemble_stiffness_3d(v3, params.kappa / params.mu)
    T = sparse.hstack([trace_matrix(v3, w.space) for w in wells], format="csr")
    Pis, Nb, Nbh = [], [], []
    for w in wells:
        dg = DG0Space1D(w.line_mesh)
        Pis.append(averaging_matrix(v3, dg, w.segment, n_theta=params.n_theta))
        Nb.append(assemble_mass_1d_dg0p1(dg, w.space, w.beta, order=5))
        Nbh.append(assemble_mass_1d_dg0p1(dg, w.space, w.beta_hat, order=5))
    Pi = sparse.vstack(Pis, format="csr")
    Nb = sparse.block_diag(Nb, format="csr")
    Nbh = sparse.block_diag(Nbh, format="csr")
    A1, Mbh = _one_d_blocks(wells, [w.beta_hat for w in wells], params)
    Mb = sparse.block_diag([assemble_mass_1d_p1p1(w.space, w.beta, order=5) for w in wells], format="csr")
    n3, n1 = v3.n_dofs, A1.shape[0]
    blocks = [[(A + T @ Nb.T @ Pi).tocsr(), (-T @ Mb).tocsr()],
              [(-Nbh.T @ Pi).tocsr(), (A1 + Mbh).tocsr()]]
    return _finish(blocks, n3, n1, "standard", v3, wells, bc_3d, bc_1d,
                   info={"T": T, "Pi": Pi, "A": A})


def _finish(blocks, n3, n1, formulation, v3, wells, bc_3d, bc_1d, info):
    K = sparse.bmat(blocks, format="csr")
    rhs = np.zeros(n3 + n1)
    if bc_3d is None and bc_1d is None:
        dofs, vals = np.array([], dtype=int), np.array([])
    else:
        if bc_3d is None or bc_1d is None:
            raise ValueError("give Dirichlet data for both the reservoir and the wells")
        dofs, vals = _bc_data(v3, wells, bc_3d, bc_1d)
        K, rhs = apply_dirichlet(K, rhs, dofs, vals)
    return BlockSystem(_split(K, n3), rhs, formulation, dofs, vals, n3, n1, info)
