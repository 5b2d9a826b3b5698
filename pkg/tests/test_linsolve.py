"""Direct SPD solver wrapper: correctness, contracts, and failure modes."""

import numpy as np
import pytest
import scipy.sparse as sp

from evolvefem.linsolve import SolverError, SpdSolver, factorize


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return sp.csr_matrix(B @ B.T + n * np.eye(n)), rng


def test_identity_solve():
    solver = factorize(sp.eye(10, format="csr"))
    b = np.arange(10.0)
    assert np.allclose(solver.solve(b), b, atol=1e-14)


def test_matches_dense_oracle():
    K, rng = random_spd(50, 5)
    solver = factorize(K)
    b = rng.standard_normal(50)
    y_dense = np.linalg.solve(K.toarray(), b)
    assert np.allclose(solver.solve(b), y_dense, rtol=1e-10)


def test_solve_is_linear():
    K, rng = random_spd(30, 6)
    solver = factorize(K)
    b1, b2 = rng.standard_normal(30), rng.standard_normal(30)
    y = solver.solve(2.0 * b1 - 3.0 * b2)
    assert np.allclose(y, 2.0 * solver.solve(b1) - 3.0 * solver.solve(b2), atol=1e-11)


def test_zero_rhs_gives_zero():
    K, _ = random_spd(20, 7)
    assert np.array_equal(factorize(K).solve(np.zeros(20)), np.zeros(20))


def test_forward_multiply_roundtrip():
    K, rng = random_spd(40, 8)
    solver = factorize(K)
    y = rng.standard_normal(40)
    assert np.allclose(solver.solve(K @ y), y, rtol=1e-10)


def test_matrix_rhs_supported():
    K, rng = random_spd(25, 9)
    solver = factorize(K)
    B = rng.standard_normal((25, 3))
    Y = solver.solve(B)
    assert Y.shape == (25, 3)
    assert np.allclose(K @ Y, B, rtol=1e-9)


def test_dimension_mismatch_rejected():
    K, _ = random_spd(10, 10)
    with pytest.raises(SolverError, match="dimension mismatch"):
        factorize(K).solve(np.ones(11))


def test_indefinite_matrix_rejected():
    K = sp.csr_matrix(np.diag([1.0, -1.0, 2.0]))
    with pytest.raises(SolverError, match="positive definite"):
        SpdSolver(K, role="indefinite test")


def test_singular_matrix_rejected():
    K = sp.csr_matrix(np.diag([1.0, 0.0, 2.0]))
    with pytest.raises(SolverError):
        SpdSolver(K, role="singular test")


def test_residual_bookkeeping():
    K, rng = random_spd(15, 12)
    solver = factorize(K)
    solver.solve(rng.standard_normal(15))
    solver.solve(rng.standard_normal(15))
    assert solver.n_solves == 2
    assert 0.0 <= solver.max_residual <= 1e-10
