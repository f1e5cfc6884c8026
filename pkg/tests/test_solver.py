import numpy as np
import pytest
import scipy.sparse as sp

from divdiv.assembly import SparseSystem, assemble_system
from divdiv.mesh import build_unit_square, perturb, refine_red
from divdiv.problems import example1
from divdiv.solver import InfSupError, SolverError, estimate_infsup, relative_residual, solve, solve_saddle


@pytest.fixture(scope="module")
def level2():
    return assemble_system(refine_red(build_unit_square(1)), example1())


def test_hand_solved_system():
    sol = solve_saddle(np.eye(2), [[1.0, 0.0]], [1.0])
    np.testing.assert_allclose(sol.sigma, [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(sol.u, [-1.0], atol=1e-15)


def test_zero_load_gives_zero(level2):
    zero = SparseSystem(level2.M, level2.B, np.zeros(level2.n_u), level2.M_u, level2.mesh, level2.basis, level2.sigma_map, level2.u_map)
    sol = solve(zero)
    assert not np.any(sol.sigma) and not np.any(sol.u)


@pytest.mark.parametrize("method", ["direct", "krylov"])
def test_residual_and_galerkin_identities(level2, method):
    sol = solve(level2, method)
    assert sol.residual <= 1e-10
    M, B, load = level2.M, level2.B, level2.load
    scale = np.abs(load).max()
    assert np.abs(M @ sol.sigma + B.T @ sol.u).max() < 1e-10 * scale
    assert np.abs(B @ sol.sigma - load).max() < 1e-10 * scale
    # energy identity (sigma, sigma) = (f, u_h) = -u . load
    energy = sol.sigma @ M @ sol.sigma
    assert energy == pytest.approx(-sol.u @ load, rel=1e-8)


def test_krylov_matches_direct():
    s = assemble_system(perturb(build_unit_square(4), 0.2, 0), example1())
    d, k = solve(s, "direct"), solve(s, "krylov")
    assert k.stats["iterations"] > 0
    np.testing.assert_allclose(k.sigma, d.sigma, atol=1e-8 * np.abs(d.sigma).max())
    np.testing.assert_allclose(k.u, d.u, atol=1e-8 * np.abs(d.u).max())


def test_permutation_independence(level2):
    rng = np.random.default_rng(0)
    p = rng.permutation(level2.n_sigma)
    q = rng.permutation(level2.n_u)
    P = sp.eye(level2.n_sigma, format="csr")[p]
    Q = sp.eye(level2.n_u, format="csr")[q]
    ref = solve(level2)
    perm = solve_saddle(P @ level2.M @ P.T, Q @ level2.B @ P.T, Q @ level2.load)
    np.testing.assert_allclose(P.T @ perm.sigma, ref.sigma, atol=1e-9 * np.abs(ref.sigma).max())
    np.testing.assert_allclose(Q.T @ perm.u, ref.u, atol=1e-9 * np.abs(ref.u).max())


def test_rank_deficient_b_fails():
    M = sp.eye(3, format="csr")
    B = sp.csr_matrix([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(SolverError):
        solve_saddle(M, B, [1.0, 1.0])


def test_unknown_method(level2):
    with pytest.raises(ValueError):
        solve(level2, "cholesky")


def test_relative_residual_of_exact_solution():
    M = sp.eye(2, format="csr")
    B = sp.csr_matrix([[1.0, 0.0]])
    assert relative_residual(M, B, np.array([1.0]), np.array([1.0, 0.0]), np.array([-1.0])) == 0.0


def test_infsup_positive_and_detects_zero_row():
    s = assemble_system(build_unit_square(1))
    beta = estimate_infsup(s)
    assert beta > 0
    B = sp.vstack([s.B, sp.csr_matrix((1, s.n_sigma))]).tocsr()
    Mu = sp.block_diag([s.M_u, sp.eye(1)]).tocsr()
    bad = SparseSystem(s.M, B, np.zeros(B.shape[0]), Mu, s.mesh, s.basis, s.sigma_map, s.u_map)
    with pytest.raises(InfSupError):
        estimate_infsup(bad)


def test_infsup_sequence_is_stable():
    mesh = build_unit_square(1)
    betas = []
    for _ in range(3):
        betas.append(estimate_infsup(assemble_system(mesh)))
        mesh = refine_red(mesh)
    assert min(betas) > 0
    assert (max(betas) - min(betas)) / max(betas) < 0.25
