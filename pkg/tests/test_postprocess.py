import math

import numpy as np
import pytest

from srbfem.coupling import assemble_srb_system
from srbfem.fem import FESpace3D
from srbfem.geometry import WellSegment, build_box_mesh, build_line_mesh
from srbfem.postprocess import (
    ERROR_COLUMNS,
    LagrangeField,
    ReportRow,
    _lagrange,
    convergence_rates,
    error_line,
    error_vs_analytic,
    export_line_csv,
    export_slice_csv,
    export_vtk,
    fitted_rate,
    lagrange_basis,
    lagrange_basis_derivs,
    pairwise_rate,
    read_report_csv,
    reconstruct_pressure,
    slice_points,
    well_intensity,
    write_rates_csv,
    write_report_csv,
)
from srbfem.solver import solve
from srbfem.testcases import make_case


def _quadratic(x):
    return 1 + x[:, 0] * x[:, 1] - x[:, 2] ** 2 + 0.5 * x[:, 0]


def _quadratic_grad(x):
    return np.column_stack([x[:, 1] + 0.5, x[:, 0], -2 * x[:, 2]])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lagrange_basis_is_nodal(k, rng):
    nodes = _lagrange(k)[0]
    np.testing.assert_allclose(lagrange_basis(k, nodes), np.eye(len(nodes)), atol=1e-12)
    lam = rng.dirichlet(np.ones(4), 20)
    np.testing.assert_allclose(lagrange_basis(k, lam).sum(axis=1), 1.0)
    h = 1e-6
    d = lagrange_basis_derivs(k, lam)
    for j in range(3):
        e = np.zeros(4)
        e[j + 1] = h
        fd = (lagrange_basis(k, lam + e) - lagrange_basis(k, lam - e)) / (2 * h)
        np.testing.assert_allclose(d[:, :, j], fd, atol=1e-7)


def test_p1_vertex_order_matches_cells(mesh4, rng):
    u = rng.normal(size=mesh4.n_vertices)
    f = LagrangeField.from_p1(mesh4, u)
    x = rng.random((40, 3))
    np.testing.assert_allclose(f.evaluate(x), FESpace3D(mesh4).evaluate(u, x), atol=1e-14)


@pytest.mark.parametrize("k", [2, 3])
def test_interpolation_reproduces_quadratics(k, mesh4, rng):
    f = LagrangeField.interpolate(mesh4, _quadratic, k)
    x = rng.random((60, 3))
    np.testing.assert_allclose(f.evaluate(x), _quadratic(x), atol=1e-13)
    err = error_vs_analytic(f, _quadratic, mesh4, interpolate=False, reference_grad=_quadratic_grad)
    assert err["L2"] < 1e-12 and err["H1"] < 1e-12


def test_p1_errors_against_known_values():
    m = build_box_mesh(4)
    f = LagrangeField.interpolate(m, lambda x: x[:, 0] ** 2)
    # reference minus P1 interpolant of x^2 on a uniform mesh is positive and O(h^2)
    e = error_vs_analytic(f, lambda x: x[:, 0] ** 2, m, interpolate=False,
                          reference_grad=lambda x: np.column_stack([2 * x[:, 0], 0 * x[:, 0], 0 * x[:, 0]]))
    assert 0 < e["L2"] < 0.25**2
    e2 = error_vs_analytic(f, lambda x: x[:, 0] ** 2, m)
    assert e2["L2"] == 0.0 and e2["H1"] == 0.0
    with pytest.raises(ValueError):
        error_vs_analytic(f, lambda x: x[:, 0], m, norms=("L3",))
    with pytest.raises(ValueError):
        error_vs_analytic(f, lambda x: x[:, 0], m, interpolate=False)


def test_error_line():
    seg = WellSegment((0, 0, 0), (0, 0, 2), 0.01)
    lm = build_line_mesh(seg, 4)
    s = lm.arc_coords
    e = error_line(3 * s - 1, lm, lambda t: 3 * t - 1, lambda t: 3 + 0 * t)
    assert e["L2"] < 1e-14 and e["H1"] < 1e-14
    e = error_line(np.zeros_like(s), lm, lambda t: 1 + 0 * t, lambda t: 0 * t)
    assert e["L2"] == pytest.approx(math.sqrt(2))


@pytest.fixture(scope="module")
def case2_solution():
    case = make_case("case2")
    mesh, v3, wells = case.discretize(4)
    S = assemble_srb_system(v3, wells, bc_3d=case.v_exact, bc_1d=case.p_hat_a)
    u3, u1 = solve(S)
    return case, mesh, v3, wells, S, u3, u1


def test_intensity_from_exact_data(case2_solution):
    case, mesh, v3, wells, S, _, _ = case2_solution
    s = wells[0].line_mesh.arc_coords
    q = well_intensity(v3.interpolate(case.v_exact), case.p_hat_a(s), wells, S.info["beta_star"], S.info["V"])
    np.testing.assert_allclose(q[0], case.intensity(s), atol=1e-3)


def test_reconstruction_improves_with_degree(case2_solution):
    case, mesh, v3, wells, S, u3, u1 = case2_solution
    errs = []
    for k in (1, 2, 3):
        p = reconstruct_pressure(u3, u1, v3, wells, S.info["beta_star"], S.info["V"], k)
        assert p.k == k
        errs.append(error_vs_analytic(p, case.p_exact, mesh, norms=("L2",), interpolate=False)["L2"])
    assert errs[0] > errs[1] > errs[2]
    with pytest.raises(ValueError):
        reconstruct_pressure(u3, u1, v3, wells, S.info["beta_star"], S.info["V"], 4)


def test_reconstruction_adds_singular_part_at_vertices(case2_solution):
    case, mesh, v3, wells, S, u3, u1 = case2_solution
    p = reconstruct_pressure(u3, u1, v3, wells, S.info["beta_star"], S.info["V"], 1)
    far = np.linalg.norm(mesh.vertices[:, :2] - 0.5, axis=1) > 0.4
    np.testing.assert_allclose(p.nodal[far], u3[far], atol=1e-12)


def _rows(errs, n=(4, 8, 16, 32), **kw):
    base = dict(case="case1", formulation="srb", R=1e-3)
    base.update(kw)
    return [ReportRow(h=1.0 / k, n=k, e_L2=e, e_H1=2 * e, ehat_L2=e, ehat_H1=e, **base) for k, e in zip(n, errs)]


def test_rates():
    assert pairwise_rate(4.0, 1.0) == 2.0
    assert pairwise_rate(1.0, 1.0) == 0.0
    assert math.isnan(pairwise_rate(0.0, 1.0))
    assert fitted_rate([0.5, 0.25, 0.125], [1.0, 0.25, 0.0625]) == pytest.approx(2.0)
    rep = convergence_rates(_rows([1.0, 0.25, 0.0625, 1 / 64])[::-1])
    assert [r.n for r in rep.rows] == [4, 8, 16, 32]
    for c in ERROR_COLUMNS:
        np.testing.assert_allclose(rep.rates[c], 2.0)
        assert rep.fitted[c] == pytest.approx(2.0)
    assert rep.summary()["n"] == [4, 8, 16, 32]


def test_rates_reject_mixed_rows():
    rows = _rows([1.0, 0.5]) + _rows([1.0], n=(16,), R=1e-4)
    with pytest.raises(ValueError):
        convergence_rates(rows)
    with pytest.raises(ValueError):
        convergence_rates(_rows([1.0, 0.5], n=(4, 16)))
    with pytest.raises(ValueError):
        convergence_rates(_rows([1.0]))


def test_report_csv_roundtrip(tmp_path):
    rows = _rows([0.1, 0.03, 0.01, 0.002])
    rows[0].e_H1 = math.nan
    rows[1].status, rows[1].diagnostic = "failed", "FactorizationError: singular"
    write_report_csv(tmp_path / "r.csv", rows)
    back = read_report_csv(tmp_path / "r.csv")
    assert back[1].status == "failed" and back[1].diagnostic.startswith("Factorization")
    assert math.isnan(back[0].e_H1)
    assert [r.e_L2 for r in back] == [r.e_L2 for r in rows]
    write_rates_csv(tmp_path / "k.csv", [convergence_rates(rows)])
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert len(lines) == 1 + 3 + 1 and lines[-1].split(",")[3] == "fit"


def test_exports(tmp_path, case2_solution):
    case, mesh, v3, wells, S, u3, u1 = case2_solution
    export_vtk(tmp_path / "f.vtk", mesh, {"v": u3})
    assert "SCALARS v double" in (tmp_path / "f.vtk").read_text()
    export_line_csv(tmp_path / "w.csv", wells[0].line_mesh, u1)
    assert len((tmp_path / "w.csv").read_text().splitlines()) == 1 + len(u1)
    pts = slice_points(mesh)
    assert pts.shape == (16, 3) and np.all(pts[:, 2] == 0.5)
    p2 = reconstruct_pressure(u3, u1, v3, wells, S.info["beta_star"], S.info["V"], 2)
    assert export_slice_csv(tmp_path / "s.csv", mesh, {"v": u3, "p": p2}) == 16
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "x,y,z,v,p"
    with pytest.raises(OSError):
        export_vtk(tmp_path / "no" / "f.vtk", mesh, {"v": u3})
