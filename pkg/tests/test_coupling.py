import numpy as np
import pytest
from scipy import sparse

from srbfem.coupling import (
    AssemblyParams,
    BlockSystem,
    Well,
    assemble_srb_system,
    assemble_standard_system,
    averaging_matrix,
    beta_star_nodal,
    corrected_coefficient,
    coupling_block_C,
    nodal_averaging_matrix,
    trace_matrix,
)
from srbfem.fem import DG0Space1D, FESpace1D, FESpace3D, assemble_mass_1d_p1p1
from srbfem.geometry import PointNotFoundError, WellSegment, build_box_mesh, build_line_mesh
from srbfem.singular import CutoffFunction, ExtensionOperator, SingularField, beta_star
from srbfem.testcases import make_case


def _well(seg, m=6, cutoff=None, kind="finite-segment", ext="rbf", beta=2.0):
    lm = build_line_mesh(seg, m)
    return Well(seg, lm, SingularField(seg, kind=kind), cutoff or CutoffFunction("gaussian", c=0.08),
                ExtensionOperator(lm, ext), lambda s: beta + 0 * np.asarray(s),
                lambda s: beta / (np.pi * seg.R**2) + 0 * np.asarray(s))


def _linear(x):
    return 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2]


def test_trace_matrix_reproduces_linear_fields(slanted_well, mesh4):
    v3, v1 = FESpace3D(mesh4), FESpace1D(build_line_mesh(slanted_well, 5))
    T = trace_matrix(v3, v1)
    assert T.shape == (v3.n_dofs, v1.n_dofs)
    np.testing.assert_allclose(T.T @ v3.interpolate(_linear), _linear(v1.mesh.vertices), atol=1e-13)
    np.testing.assert_allclose(np.asarray(T.sum(axis=0)).ravel(), 1.0)


def test_averaging_matrices_reproduce_linear_fields(slanted_well, mesh4):
    v3 = FESpace3D(mesh4)
    lm = build_line_mesh(slanted_well, 5)
    u = v3.interpolate(_linear)
    Pi = averaging_matrix(v3, DG0Space1D(lm))
    mid = slanted_well.point_at(0.5 * (lm.arc_coords[:-1] + lm.arc_coords[1:]))
    np.testing.assert_allclose(Pi @ u, _linear(mid), atol=1e-12)
    P = nodal_averaging_matrix(v3, FESpace1D(lm))
    np.testing.assert_allclose(P @ u, _linear(lm.vertices), atol=1e-12)
    np.testing.assert_allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)


def test_trace_outside_mesh_raises(mesh4):
    seg = WellSegment((0.5, 0.5, 0.5), (0.5, 0.5, 1.5), 0.01)
    with pytest.raises(PointNotFoundError):
        trace_matrix(FESpace3D(mesh4), FESpace1D(build_line_mesh(seg, 4)))


def test_zero_cutoff_gives_zero_coupling(vertical_well, mesh4):
    w = _well(vertical_well, cutoff=CutoffFunction("zero"))
    C = coupling_block_C(FESpace3D(mesh4), [w])
    assert C.shape == (mesh4.n_vertices, 7) and C.nnz == 0


def test_coupling_entry_against_monte_carlo(vertical_well):
    mesh = build_box_mesh(4)
    v3 = FESpace3D(mesh)
    w = _well(vertical_well)
    bstar = beta_star_nodal([w])[0]
    C = coupling_block_C(v3, [w], [bstar])
    i = int(np.argmin(np.linalg.norm(mesh.vertices - [0.75, 0.5, 0.5], axis=1)))
    l = 3
    cells = np.flatnonzero(np.any(mesh.cells == i, axis=1))
    rng = np.random.default_rng(7)
    f = np.zeros(w.line_mesh.n_vertices)
    f[l] = bstar[l]

    def carrier(x):
        return w.cutoff(x, w.segment) * w.extension.extend(f, x)

    est, var = 0.0, 0.0
    h = 1e-6
    for c in cells:
        lam = rng.dirichlet(np.ones(4), 40000)
        x = lam @ mesh.vertices[mesh.cells[c]]
        k = int(np.flatnonzero(mesh.cells[c] == i)[0])
        phi, gphi = lam[:, k], mesh.basis_gradients[c, k]
        gw = np.column_stack([(carrier(x + e) - carrier(x - e)) / (2 * h) for e in h * np.eye(3)])
        G, gG = w.potential.value_and_grad(x)
        vals = gw @ gphi * G - np.einsum("pk,pk->p", gw, gG) * phi
        vol = mesh.volumes[c]
        est += vol * vals.mean()
        var += vol**2 * vals.var() / len(vals)
    assert abs(C[i, l] - est) < 5 * np.sqrt(var) + 1e-8
    assert abs(C[i, l]) > 10 * np.sqrt(var)


def test_beta_star_superposition(vertical_well):
    other = WellSegment((0.3, 0.3, 0.2), (0.3, 0.3, 0.8), 1e-2)
    w1, w2 = _well(vertical_well), _well(other)
    single = beta_star_nodal([w1])[0]
    both = beta_star_nodal([w1, w2])[0]
    # the second well raises the averaged potential, so beta* drops
    assert np.all(both < single)
    ref = beta_star(w1.beta, [(w1.potential, w1.cutoff), (w2.potential, w2.cutoff)], vertical_well,
                    w1.line_mesh.arc_coords)
    np.testing.assert_allclose(both, ref)


def test_corrected_beta_hat(vertical_well):
    w = _well(vertical_well)
    s = w.line_mesh.arc_coords
    bh = corrected_coefficient([w], 0, w.beta_hat)(s)
    np.testing.assert_allclose(bh, beta_star_nodal([w])[0] / (np.pi * vertical_well.R**2))


def test_well_rejects_truncated_and_mismatched(vertical_well):
    lm = build_line_mesh(vertical_well, 4)
    ext = ExtensionOperator(lm)
    with pytest.raises(ValueError):
        Well(vertical_well, lm, SingularField(vertical_well, kind="truncated", r_e=0.1), CutoffFunction(), ext,
             np.ones_like, np.ones_like)
    other = WellSegment(vertical_well.a, vertical_well.b, vertical_well.R)
    with pytest.raises(ValueError):
        Well(vertical_well, lm, SingularField(other), CutoffFunction(), ext, np.ones_like, np.ones_like)


def test_block_shapes_validated():
    z = sparse.csr_matrix((3, 3))
    with pytest.raises(ValueError):
        BlockSystem([[z, sparse.csr_matrix((3, 2))], [sparse.csr_matrix((2, 3)), z]], np.zeros(5), "srb",
                    np.array([]), np.array([]), 3, 2)


@pytest.mark.parametrize("vbar", ["trace", "average"])
def test_srb_system_structure(vbar):
    case = make_case("case2")
    mesh, v3, wells = case.discretize(4)
    S = assemble_srb_system(v3, wells, AssemblyParams(vbar=vbar), bc_3d=case.v_exact, bc_1d=case.p_hat_a)
    K = S.matrix()
    assert K.shape == (v3.n_dofs + 3, v3.n_dofs + 3)
    b = S.bc_dofs
    np.testing.assert_allclose(K[b].toarray(), np.eye(K.shape[0])[b])
    np.testing.assert_allclose(S.rhs[b], S.bc_values)
    assert np.all(np.isfinite(K.data))


def test_dirichlet_data_required_in_pairs():
    case = make_case("case2")
    _, v3, wells = case.discretize(4)
    with pytest.raises(ValueError):
        assemble_srb_system(v3, wells, bc_3d=case.v_exact)


def test_without_singular_part_the_well_rows_match_the_standard_rows(vertical_well):
    """Psi = 0 gives beta* = beta and no coupling block; the well rows then equal the
    standard well rows with the borehole average replaced by the trace."""
    mesh = build_box_mesh(4)
    v3 = FESpace3D(mesh)
    w = _well(vertical_well, cutoff=CutoffFunction("zero"))
    S = assemble_srb_system(v3, [w])
    St = assemble_standard_system(v3, [w])
    np.testing.assert_allclose(S.info["beta_star"][0], 2.0)
    assert S.info["C"].nnz == 0
    n3 = v3.n_dofs
    Mbh = assemble_mass_1d_p1p1(w.space, w.beta_hat, order=5)
    T = St.info["T"]
    np.testing.assert_allclose(S.blocks[1][1].toarray(), St.blocks[1][1].toarray(), atol=1e-9)
    np.testing.assert_allclose(S.blocks[1][0].toarray(), (-Mbh @ T.T).toarray(), atol=1e-9)
    np.testing.assert_allclose(S.blocks[0][0].toarray(), St.info["A"].toarray(), atol=1e-12)
    assert S.blocks[0][1].nnz == 0 and S.n3 == n3


def test_standard_system_conserves_the_source():
    case = make_case("case1", 0.01)
    mesh, v3, wells = case.discretize(4)
    St = assemble_standard_system(v3, wells)
    # with constant pressures p = p_hat = 1 the exchange term vanishes
    x = np.ones(St.n3 + St.n1)
    np.testing.assert_allclose(St.matrix() @ x, 0.0, atol=1e-9)
