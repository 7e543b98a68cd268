import numpy as np
import pytest

from srbfem.testcases import (
    CASE1_RADII,
    THRESHOLDS,
    case1_regular,
    make_case,
    make_case1,
    make_case2,
    validate_manufactured,
)


@pytest.mark.parametrize("R", CASE1_RADII)
def test_case1_data_pass_the_gate(R):
    rep = validate_manufactured(make_case("case1", R))
    assert rep["passed"], rep
    assert rep["v_sign"] == 1.0
    assert rep["laplacian_magnitude_rel"] < 1e-4


def test_case2_data_pass_the_gate():
    rep = validate_manufactured(make_case("case2"))
    assert rep["passed"], rep
    assert rep["laplacian_magnitude_rel"] < 1e-4


def test_case1_regular_part_closed_form_laplacian(rng):
    # Lap(z r^2 (ln r - 1)) = 4 z ln r, so -Lap(v) = -(3/pi) z ln r = 6 z * (-ln r / 2 pi)
    x = np.column_stack([0.5 + 0.2 * rng.random(10) + 0.05, 0.5 + 0.1 * rng.random(10), rng.random(10)])
    h = 1e-4
    lap = sum((case1_regular(x + e) - 2 * case1_regular(x) + case1_regular(x - e)) / h**2 for e in h * np.eye(3))
    r = np.hypot(x[:, 0] - 0.5, x[:, 1] - 0.5)
    np.testing.assert_allclose(-lap, 6 * x[:, 2] * (-np.log(r) / (2 * np.pi)), rtol=1e-5)


def test_wrong_sign_breaks_the_laplacian_check():
    rep = validate_manufactured(make_case1(1e-2, v_sign=-1.0))
    assert rep["laplacian_rel_by_sign"]["-"] > 1.0
    assert rep["well_equation_by_sign"]["-"] > 1e3 * rep["well_equation_by_sign"]["+"]


def test_split_reassembles_the_pressure(rng):
    for case in (make_case("case1", 1e-3), make_case("case2")):
        x = rng.random((50, 3))
        np.testing.assert_allclose(case.v_exact(x) + case.singular_part(x), case.p_exact(x), rtol=1e-12,
                                   atol=1e-12)


def test_case2_intensity_and_contact():
    case = make_case2()
    s = np.linspace(0, case.segment.L, 5)
    np.testing.assert_allclose(case.intensity(s), 0.25 + s)
    assert np.all(case.beta(s) > 0)
    assert case.intensity(np.array([-0.1, 0.6]))[0] == 0.0
    np.testing.assert_allclose(case.beta(np.array([-0.1])), 0.0)


def test_mesh_pairing():
    c1, c2 = make_case("case1"), make_case("case2")
    assert c1.line_cells(8) == 16 and c2.line_cells(8) == 4
    with pytest.raises(ValueError):
        c2.line_cells(1)
    mesh, v3, wells = c2.discretize(4)
    assert mesh.n_cells == 6 * 64 and wells[0].line_mesh.n_cells == 2


def test_standard_dirichlet_is_finite_on_the_axis():
    case = make_case("case1", 1e-4)
    x = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 1.0], [0.0, 0.3, 0.2]])
    g = case.standard_dirichlet(8)(x)
    assert np.all(np.isfinite(g))
    assert g[2] == pytest.approx(case.p_exact(x[2:])[0])


def test_make_case_errors():
    with pytest.raises(ValueError):
        make_case("case3")
    with pytest.raises(ValueError):
        make_case("case1", c=0.1)
    with pytest.raises(ValueError):
        make_case1(0.7)
    assert make_case("case2", c=0.08).cutoff.c == 0.08


def test_thresholds_are_documented():
    assert set(THRESHOLDS) == {"laplacian_rel", "well_equation_abs", "intensity_abs", "boundary_abs"}
