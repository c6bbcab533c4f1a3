import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gosm2d.linalg import (
    NoConvergenceError,
    SingularMatrixError,
    cg_solve,
    gmres_solve,
    kernel_basis,
    lu_factorize,
    pseudo_apply,
    pseudo_inverse,
)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestLU:
    def test_identity(self):
        f = lu_factorize(np.eye(5))
        e3 = np.zeros(5)
        e3[2] = 1.0
        assert np.allclose(f.solve(e3), e3)

    def test_hand_elimination_2x2(self):
        # [[2,1],[1,2]] x = [3,3]: eliminate row 2 -> (2 - 1/2) x2 = 3 - 3/2 -> x2 = 1, x1 = 1
        f = lu_factorize(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(f.solve(np.array([3.0, 3.0])), [1.0, 1.0])

    def test_rank_deficient_diagonal_raises(self):
        with pytest.raises(SingularMatrixError):
            lu_factorize(np.diag([1.0, 0.0]))

    def test_sparse_singular_raises(self):
        m = sp.diags([1.0, 1.0, 0.0]).tocsc()
        with pytest.raises(SingularMatrixError):
            lu_factorize(m)

    def test_random_residuals_dense_and_sparse(self):
        rng = np.random.default_rng(0)
        n = 40
        a = random_complex(rng, n, n) + n * np.eye(n)
        for mat in (a, sp.csc_matrix(a)):
            f = lu_factorize(mat)
            for _ in range(50):
                b = random_complex(rng, n)
                x = f.solve(b)
                assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


class TestPseudoInverse:
    def test_invertible_matches_solve(self):
        rng = np.random.default_rng(1)
        a = random_complex(rng, 6, 6) + 6 * np.eye(6)
        b = random_complex(rng, 6)
        assert np.allclose(pseudo_apply(a, b), np.linalg.solve(a, b), atol=1e-10)

    def test_diagonal_rank_deficient(self):
        m = np.diag([1.0, 0.0])
        assert np.allclose(pseudo_apply(m, np.array([2.0, 3.0])), [2.0, 0.0])

    @pytest.mark.parametrize("seed", range(20))
    def test_moore_penrose_conditions(self, seed):
        # brute-force check of the four defining conditions on random
        # rank-deficient matrices
        rng = np.random.default_rng(seed)
        m, n, r = 6, 4, 3
        a = random_complex(rng, m, r) @ random_complex(rng, r, n)
        pinv = pseudo_inverse(a)
        ap = pinv.solve(np.eye(m, dtype=np.complex128))
        scale = np.linalg.norm(a)
        assert np.linalg.norm(a @ ap @ a - a) <= 1e-10 * scale
        assert np.linalg.norm(ap @ a @ ap - ap) <= 1e-10 * np.linalg.norm(ap)
        for proj in (ap @ a, a @ ap):
            assert np.linalg.norm(proj @ proj - proj) <= 1e-10
            assert np.linalg.norm(proj - proj.conj().T) <= 1e-10
        assert pinv.rank == r

    def test_matrix_rhs(self):
        rng = np.random.default_rng(3)
        a = random_complex(rng, 5, 3)
        b = random_complex(rng, 5, 2)
        x = pseudo_apply(a, b)
        assert x.shape == (3, 2)
        assert np.allclose(x, np.linalg.pinv(a) @ b, atol=1e-10)


class TestKernelBasis:
    def test_identity_has_empty_kernel(self):
        rank, basis = kernel_basis(np.eye(4))
        assert rank == 4 and basis.shape == (4, 0)

    def test_diag_110(self):
        rank, basis = kernel_basis(np.diag([1.0, 1.0, 0.0]))
        assert rank == 2
        assert basis.shape == (3, 1)
        assert abs(abs(basis[2, 0]) - 1.0) < 1e-12

    @given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=4))
    @settings(max_examples=25, deadline=None)
    def test_random_rank(self, n, defect):
        defect = min(defect, n)
        rng = np.random.default_rng(n * 7 + defect)
        r = n - defect
        a = random_complex(rng, n, r) @ random_complex(rng, r, n) if r else np.zeros((n, n))
        rank, basis = kernel_basis(a, rank_tol=1e-8)
        assert rank == r
        assert basis.shape == (n, defect)
        if defect:
            assert np.linalg.norm(a @ basis) <= 10 * 1e-8 * max(np.linalg.norm(a), 1.0)


class TestCG:
    def test_identity_one_iteration(self):
        b = np.array([1.0, -2.0, 3.0], dtype=complex)
        assert np.allclose(cg_solve(lambda x: x, b), b)

    def test_diagonal(self):
        d = np.arange(1.0, 6.0)
        x = cg_solve(lambda v: d * v, np.ones(5))
        assert np.allclose(x, 1.0 / d, atol=1e-12)

    def test_matches_dense_solve_up_to_500(self):
        rng = np.random.default_rng(5)
        for n in (50, 200, 500):
            q = np.linalg.qr(rng.standard_normal((n, n)))[0]
            a = q @ np.diag(rng.uniform(1.0, 50.0, n)) @ q.T
            b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            x = cg_solve(lambda v, a=a: a @ v, b, tol=1e-13)
            assert np.linalg.norm(x - np.linalg.solve(a, b)) <= 1e-10 * np.linalg.norm(b)

    def test_no_convergence(self):
        a = np.diag([1.0, 1e8])
        with pytest.raises(NoConvergenceError):
            cg_solve(lambda v: a @ v, np.ones(2), tol=1e-15, max_iter=1)


class TestGMRES:
    def test_identity(self):
        b = np.array([1.0 + 1j, 2.0])
        assert np.allclose(gmres_solve(lambda x: x, b, tol=1e-12), b)

    def test_random_complex_system_matches_dense(self):
        rng = np.random.default_rng(7)
        a = random_complex(rng, 10, 10) + 10 * np.eye(10)
        b = random_complex(rng, 10)
        x = gmres_solve(lambda v: a @ v, b, tol=1e-12)
        assert np.linalg.norm(x - np.linalg.solve(a, b)) <= 1e-8 * np.linalg.norm(b)

    def test_restarted(self):
        rng = np.random.default_rng(8)
        a = random_complex(rng, 30, 30) + 30 * np.eye(30)
        b = random_complex(rng, 30)
        x = gmres_solve(lambda v: a @ v, b, tol=1e-10, restart=8)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_happy_breakdown_returns_exact(self):
        # b is an eigenvector: Krylov space is 1-dimensional
        a = np.diag([2.0, 3.0])
        b = np.array([1.0, 0.0], dtype=complex)
        x = gmres_solve(lambda v: a @ v, b, tol=1e-14)
        assert np.allclose(x, [0.5, 0.0])

    def test_no_convergence(self):
        rng = np.random.default_rng(9)
        a = random_complex(rng, 20, 20) + 20 * np.eye(20)
        with pytest.raises(NoConvergenceError):
            gmres_solve(lambda v: a @ v, random_complex(rng, 20), tol=1e-14, max_iter=3)

    def test_zero_rhs(self):
        assert np.allclose(gmres_solve(lambda x: x, np.zeros(4)), 0.0)
