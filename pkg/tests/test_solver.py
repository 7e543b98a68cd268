import numpy as np
import pytest
from scipy import sparse

from srbfem.coupling import BlockSystem, assemble_srb_system
from srbfem.solver import FactorizationError, NoConvergenceError, SolverConfig, relative_residual, solve
from srbfem.testcases import make_case


@pytest.fixture(scope="module")
def system():
    case = make_case("case2")
    _, v3, wells = case.discretize(8)
    return assemble_srb_system(v3, wells, bc_3d=case.v_exact, bc_1d=case.p_hat_a)


def test_direct_and_gmres_agree(system):
    u3, u1 = solve(system, SolverConfig("direct-LU"))
    g3, g1 = solve(system, SolverConfig("gmres-ilu", rel_tol=1e-11))
    x = np.concatenate([u3, u1])
    assert relative_residual(system.matrix(), x, system.rhs) < 1e-12
    np.testing.assert_allclose(g3, u3, atol=1e-8)
    np.testing.assert_allclose(g1, u1, atol=1e-8)
    assert relative_residual(system.matrix(), np.concatenate([g3, g1]), system.rhs) <= 1e-11
    assert len(u3) == system.n3 and len(u1) == system.n1


def test_gmres_iteration_cap(system):
    with pytest.raises(NoConvergenceError) as info:
        solve(system, SolverConfig("gmres-ilu", rel_tol=1e-30, max_iter=1, restart=2))
    assert info.value.residual > 0


def _singular_system():
    A = sparse.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    return BlockSystem([[A, sparse.csr_matrix((2, 1))], [sparse.csr_matrix((1, 2)), sparse.csr_matrix(np.eye(1))]],
                       np.ones(3), "srb", np.array([]), np.array([]), 2, 1)


def test_singular_matrix_is_reported():
    with pytest.raises(FactorizationError):
        solve(_singular_system())


@pytest.mark.parametrize("kw", [dict(method="cg"), dict(rel_tol=0.0), dict(max_iter=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)
