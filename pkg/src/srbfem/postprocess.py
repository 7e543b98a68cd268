"""Pressure reconstruction, error norms, convergence rates and exports."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .coupling import Well
from .fem import FESpace3D, composite_tet_rule, gauss_1d, quadrature_points
from .geometry import LineMesh1D, TetMesh3D, write_vtk

# --------------------------------------------------------------------------
# Lagrange elements of degree k on the reference tetrahedron
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _lagrange(k: int):
    """Lattice nodes (barycentric, shape (n_loc, 4)), monomial exponents and
    the inverse Vandermonde matrix for degree-``k`` Lagrange elements."""
    if k < 1:
        raise ValueError(f"interpolation degree must be >= 1, got {k}")
    # ordered so that for k = 1 the nodes are the vertices in cell order
    lattice = sorted((e for e in product(range(k + 1), repeat=3) if sum(e) <= k),
                     key=lambda e: (sum(e), -e[0], -e[1], -e[2]))
    nodes = np.array([(k - i - j - l, i, j, l) for i, j, l in lattice], dtype=float) / k
    expo = np.array([e for e in product(range(k + 1), repeat=3) if sum(e) <= k])
    V = _monomials(nodes[:, 1:], expo)
    return nodes, expo, np.linalg.inv(V)


def _monomials(lam, expo):
    return np.prod(lam[:, None, :] ** expo[None, :, :], axis=2)


def _monomial_derivs(lam, expo):
    """d/d lambda_j of every monomial, shape (P, n_mono, 3)."""
    out = np.zeros((len(lam), len(expo), 3))
    for j in range(3):
        e = expo.copy()
        coef = e[:, j].astype(float)
        e[:, j] = np.maximum(e[:, j] - 1, 0)
        out[:, :, j] = coef[None, :] * _monomials(lam, e)
    return out


def lagrange_basis(k: int, bary):
    """Values (P, n_loc) of the degree-k nodal basis at barycentric points."""
    _, expo, Vinv = _lagrange(k)
    return _monomials(np.atleast_2d(bary)[:, 1:], expo) @ Vinv


def lagrange_basis_derivs(k: int, bary):
    """Derivatives (P, n_loc, 3) with respect to lambda_1..lambda_3."""
    _, expo, Vinv = _lagrange(k)
    d = _monomial_derivs(np.atleast_2d(bary)[:, 1:], expo)
    return np.einsum("pmj,mn->pnj", d, Vinv)


def lagrange_points(mesh: TetMesh3D, k: int, cells=None) -> np.ndarray:
    """Physical lattice points, shape (n_cells, n_loc, 3)."""
    nodes, _, _ = _lagrange(k)
    cells = np.arange(mesh.n_cells) if cells is None else cells
    return np.einsum("ni,cik->cnk", nodes, mesh.vertices[mesh.cells[cells]])


# --------------------------------------------------------------------------
# piecewise polynomial fields
# --------------------------------------------------------------------------

@dataclass(eq=False)
class LagrangeField:
    """Degree-k field stored cell by cell at the lattice points.

    For k = 1 ``nodal`` also holds the global vertex values.
    """

    mesh: TetMesh3D
    k: int
    values: np.ndarray  # (n_cells, n_loc)
    nodal: np.ndarray | None = None

    @classmethod
    def from_p1(cls, mesh: TetMesh3D, coeffs) -> "LagrangeField":
        coeffs = np.asarray(coeffs, dtype=float)
        return cls(mesh, 1, coeffs[mesh.cells], coeffs)

    @classmethod
    def interpolate(cls, mesh: TetMesh3D, fn: Callable, k: int = 1, chunk: int = 50000) -> "LagrangeField":
        if k == 1:
            return cls.from_p1(mesh, fn(mesh.vertices))
        parts = []
        for start in range(0, mesh.n_cells, chunk):
            cells = np.arange(start, min(start + chunk, mesh.n_cells))
            pts = lagrange_points(mesh, k, cells)
            parts.append(np.asarray(fn(pts.reshape(-1, 3)), dtype=float).reshape(len(cells), -1))
        return cls(mesh, k, np.vstack(parts))

    def __sub__(self, other: "LagrangeField") -> "LagrangeField":
        if other.k != self.k or other.mesh is not self.mesh:
            raise ValueError("fields live on different spaces")
        nodal = None if self.nodal is None or other.nodal is None else self.nodal - other.nodal
        return LagrangeField(self.mesh, self.k, self.values - other.values, nodal)

    def at(self, bary, cells) -> np.ndarray:
        return self.values[cells] @ lagrange_basis(self.k, bary).T

    def grad_at(self, bary, cells) -> np.ndarray:
        """Gradients (len(cells), P, 3)."""
        d = lagrange_basis_derivs(self.k, bary)  # (P, n, 3) w.r.t. lambda_1..3
        G = self.mesh.basis_gradients[cells][:, 1:, :]  # (c, 3, 3)
        return np.einsum("cn,pnj,cjk->cpk", self.values[cells], d, G)

    def evaluate(self, points) -> np.ndarray:
        cells, bary = self.mesh.locator.locate(np.atleast_2d(points))
        if np.any(cells < 0):
            raise LookupError("evaluation point outside the mesh")
        B = lagrange_basis(self.k, bary)
        return np.einsum("pn,pn->p", B, self.values[cells])


# --------------------------------------------------------------------------
# reconstruction
# --------------------------------------------------------------------------

def well_intensity(v_h, p_hat_h, wells: Sequence[Well], beta_star: Sequence[np.ndarray], V) -> list[np.ndarray]:
    """Nodal intensities beta* (p_hat_h - vbar_h) per well; ``V`` maps v_h to vbar_h."""
    vbar = (V @ np.asarray(v_h, dtype=float)) if sparse.issparse(V) or isinstance(V, np.ndarray) else V(v_h)
    out, off = [], 0
    for w, bs in zip(wells, beta_star):
        n1 = w.line_mesh.n_vertices
        out.append(np.asarray(bs) * (np.asarray(p_hat_h)[off:off + n1] - vbar[off:off + n1]))
        off += n1
    return out


def singular_term(wells: Sequence[Well], intensities: Sequence[np.ndarray]) -> Callable:
    """x -> sum_w E(q_w)(x) Psi_w(x) G_w(x), G clamped inside the borehole."""

    def fn(x):
        x = np.atleast_2d(x)
        total = np.zeros(len(x))
        for w, q in zip(wells, intensities):
            psi = w.cutoff(x, w.segment)
            live = psi != 0.0
            if not np.any(live):
                continue
            xl = x[live]
            total[live] += w.extension.extend(q, xl) * psi[live] * w.potential(xl)
        return total

    return fn


def reconstruct_pressure(v_h, p_hat_h, v3: FESpace3D, wells: Sequence[Well], beta_star: Sequence[np.ndarray],
                         V, k: int = 1) -> LagrangeField:
    """p_h = I_h^k( E(beta* (p_hat_h - vbar_h)) Psi G ) + v_h on degree-k Lagrange points."""
    if k not in (1, 2, 3):
        raise ValueError(f"reconstruction degree must be 1, 2 or 3, got {k}")
    q = well_intensity(v_h, p_hat_h, wells, beta_star, V)
    sing = LagrangeField.interpolate(v3.mesh, singular_term(wells, q), k)
    v = LagrangeField.from_p1(v3.mesh, v_h)
    if k == 1:
        return LagrangeField.from_p1(v3.mesh, sing.nodal + v.nodal)
    nodes, _, _ = _lagrange(k)
    return LagrangeField(v3.mesh, k, sing.values + v.at(nodes, np.arange(v3.mesh.n_cells)))


# --------------------------------------------------------------------------
# errors
# --------------------------------------------------------------------------

def _as_field(field, mesh: TetMesh3D):
    if isinstance(field, LagrangeField):
        return field
    if callable(field):
        return field
    return LagrangeField.from_p1(mesh, field)


def _cell_groups(mesh, near, refine_levels):
    if near is None or refine_levels == 0:
        return [(np.arange(mesh.n_cells), 0)]
    near = np.asarray(near, dtype=bool)
    return [(np.flatnonzero(~near), 0), (np.flatnonzero(near), refine_levels)]


def error_vs_analytic(field, reference: Callable, mesh: TetMesh3D, norms=("L2", "H1"), interpolate: bool = True,
                      reference_grad: Callable | None = None, near=None, refine_levels: int = 0,
                      chunk: int = 40000) -> dict:
    """Norms of ``reference - field`` over the mesh.

    With ``interpolate`` the reference is first interpolated onto the field's
    Lagrange points, so the error is itself a discrete field. Otherwise the
    reference is sampled at quadrature points, refined on ``near`` cells, and
    the H1 part needs ``reference_grad``.
    """
    unknown = set(norms) - {"L2", "H1"}
    if unknown:
        raise ValueError(f"unknown norms {sorted(unknown)}")
    fh = _as_field(field, mesh)
    if callable(fh) and not isinstance(fh, LagrangeField):
        raise TypeError("the discrete field must be a coefficient vector or a LagrangeField")
    if interpolate:
        err = LagrangeField.interpolate(mesh, reference, fh.k) - fh
    elif "H1" in norms and reference_grad is None:
        raise ValueError("H1 error against a callable needs reference_grad")
    out = {}
    totals = {"L2": 0.0, "H1": 0.0}
    for cells_all, levels in _cell_groups(mesh, near, refine_levels):
        # degree-5 rule; one red refinement level keeps squared P2/P3 errors accurate
        rule = composite_tet_rule(5, levels if levels else int(fh.k > 1))
        step = max(1, chunk // len(rule.weights))
        for start in range(0, len(cells_all), step):
            cells = cells_all[start:start + step]
            vol = mesh.volumes[cells]
            if interpolate:
                if "L2" in norms:
                    e = err.at(rule.bary, cells)
                    totals["L2"] += float(vol @ ((e * e) @ rule.weights))
                if "H1" in norms:
                    g = err.grad_at(rule.bary, cells)
                    totals["H1"] += float(vol @ (np.einsum("cpk,cpk->cp", g, g) @ rule.weights))
                continue
            pts = quadrature_points(mesh, rule, cells).reshape(-1, 3)
            if "L2" in norms:
                e = np.asarray(reference(pts)).reshape(len(cells), -1) - fh.at(rule.bary, cells)
                totals["L2"] += float(vol @ ((e * e) @ rule.weights))
            if "H1" in norms:
                g = np.asarray(reference_grad(pts)).reshape(len(cells), -1, 3) - fh.grad_at(rule.bary, cells)
                totals["H1"] += float(vol @ (np.einsum("cpk,cpk->cp", g, g) @ rule.weights))
    for name in norms:
        out[name] = math.sqrt(totals[name])
    return out


def error_line(p_hat_h, line_mesh: LineMesh1D, reference: Callable, reference_ds: Callable, order: int = 5) -> dict:
    """L2 and H1-seminorm of ``reference - p_hat_h`` on one well (P1 well field)."""
    p_hat_h = np.asarray(p_hat_h, dtype=float)
    xi, w = gauss_1d(order)
    s0 = line_mesh.arc_coords[:-1]
    hl = line_mesh.cell_lengths
    s = s0[:, None] + hl[:, None] * xi[None, :]
    i0, i1 = line_mesh.cells[:, 0], line_mesh.cells[:, 1]
    uh = p_hat_h[i0][:, None] * (1.0 - xi)[None, :] + p_hat_h[i1][:, None] * xi[None, :]
    duh = ((p_hat_h[i1] - p_hat_h[i0]) / hl)[:, None]
    e = np.asarray(reference(s)) - uh
    de = np.asarray(reference_ds(s)) - duh
    return {"L2": float(np.sqrt(np.sum(hl[:, None] * w * e * e))),
            "H1": float(np.sqrt(np.sum(hl[:, None] * w * de * de)))}


# --------------------------------------------------------------------------
# convergence reports
# --------------------------------------------------------------------------

ERROR_COLUMNS = ("e_L2", "e_H1", "ehat_L2", "ehat_H1")


@dataclass
class ReportRow:
    case: str
    formulation: str
    R: float
    n: int
    h: float
    e_L2: float = math.nan
    e_H1: float = math.nan
    ehat_L2: float = math.nan
    ehat_H1: float = math.nan
    status: str = "ok"
    diagnostic: str = ""

    def key(self) -> tuple:
        return (self.case, self.formulation, float(self.R))

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_strings(cls, d: dict) -> "ReportRow":
        conv = {"R": float, "n": int, "h": float, **{c: float for c in ERROR_COLUMNS}}
        return cls(**{k: conv.get(k, str)(v) for k, v in d.items() if k in cls.columns()})


@dataclass
class ConvergenceReport:
    rows: list[ReportRow]
    rates: dict = field(default_factory=dict)  # column -> pairwise rates
    fitted: dict = field(default_factory=dict)  # column -> least-squares slope

    def summary(self) -> dict:
        r = self.rows[0]
        return {"case": r.case, "formulation": r.formulation, "R": r.R, "n": [x.n for x in self.rows],
                "rates": self.rates, "fitted": self.fitted}


def pairwise_rate(e_coarse: float, e_fine: float) -> float:
    if e_coarse == e_fine:
        return 0.0
    if e_coarse <= 0 or e_fine <= 0 or not (np.isfinite(e_coarse) and np.isfinite(e_fine)):
        return math.nan
    return math.log2(e_coarse / e_fine)


def fitted_rate(h, e) -> float:
    """Least-squares slope of log e against log h."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(h[ok]), np.log(e[ok]), 1)[0])


def convergence_rates(rows: Sequence[ReportRow], columns=ERROR_COLUMNS) -> ConvergenceReport:
    """Rates for a sequence of runs that differ only in the mesh size.

    Rows are sorted coarse to fine; consecutive meshes must halve h.
    """
    rows = sorted(rows, key=lambda r: r.n)
    if len(rows) < 2:
        raise ValueError("need at least two rows to compute rates")
    if len({r.key() for r in rows}) != 1:
        raise ValueError("rows differ in parameters other than the mesh size")
    for a, b in zip(rows, rows[1:]):
        if not math.isclose(a.h, 2.0 * b.h, rel_tol=1e-9):
            raise ValueError(f"mesh sizes {a.h} and {b.h} are not a factor 2 apart")
    report = ConvergenceReport(list(rows))
    h = [r.h for r in rows]
    for col in columns:
        e = [getattr(r, col) for r in rows]
        report.rates[col] = [pairwise_rate(x, y) for x, y in zip(e, e[1:])]
        report.fitted[col] = fitted_rate(h, e)
    return report


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_report_csv(path, rows: Sequence[ReportRow]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(ReportRow.columns())
        for r in rows:
            wr.writerow([_fmt(v) for v in asdict(r).values()])


def read_report_csv(path) -> list[ReportRow]:
    with Path(path).open(newline="") as fh:
        return [ReportRow.from_strings(d) for d in csv.DictReader(fh)]


def write_rates_csv(path, reports: Sequence[ConvergenceReport]) -> None:
    """One row per (run group, mesh pair) with the pairwise rate of every column."""
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["case", "formulation", "R", "n_coarse", "n_fine"] + [f"l_{c}" for c in ERROR_COLUMNS])
        for rep in reports:
            for i, (a, b) in enumerate(zip(rep.rows, rep.rows[1:])):
                wr.writerow([a.case, a.formulation, _fmt(a.R), a.n, b.n] +
                            [_fmt(rep.rates[c][i]) for c in ERROR_COLUMNS])
            r = rep.rows[0]
            wr.writerow([r.case, r.formulation, _fmt(r.R), "fit", "fit"] + [_fmt(rep.fitted[c]) for c in ERROR_COLUMNS])


# --------------------------------------------------------------------------
# field exports
# --------------------------------------------------------------------------

def export_vtk(path, mesh: TetMesh3D, fields: dict) -> None:
    try:
        write_vtk(path, mesh, {k: np.asarray(v, dtype=float) for k, v in fields.items()})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def export_line_csv(path, line_mesh: LineMesh1D, p_hat) -> None:
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["s", "p_hat"])
        for s, p in zip(line_mesh.arc_coords, np.asarray(p_hat, dtype=float)):
            wr.writerow([repr(float(s)), repr(float(p))])


def slice_points(mesh: TetMesh3D, z: float = 0.5) -> np.ndarray:
    """Cell-centred n x n sample grid of the plane at height ``z``."""
    lo, hi = (np.asarray(b, dtype=float) for b in mesh.box)
    nx, ny = mesh.divisions[0], mesh.divisions[1]
    xs = lo[0] + (np.arange(nx) + 0.5) * (hi[0] - lo[0]) / nx
    ys = lo[1] + (np.arange(ny) + 0.5) * (hi[1] - lo[1]) / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])


def export_slice_csv(path, mesh: TetMesh3D, fields: dict, z: float = 0.5) -> int:
    """Write P1 or Lagrange fields sampled on the slice; returns the number of points."""
    pts = slice_points(mesh, z)
    cols = {}
    for name, f in fields.items():
        cols[name] = _as_field(f, mesh).evaluate(pts)
    with Path(path).open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["x", "y", "z"] + list(cols))
        for i, p in enumerate(pts):
            wr.writerow([repr(float(c)) for c in p] + [repr(float(cols[k][i])) for k in cols])
    return len(pts)
