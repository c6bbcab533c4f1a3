"""Complex dense/sparse linear algebra: factorizations, Krylov solvers, SVD tools.

Dense factorizations go through LAPACK, sparse ones through SuperLU. The
SVD-based pseudo-inverse is dense only; it is reserved for desk-scale
resonance studies where local operators may be singular.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(Exception):
    """A pivot fell below tolerance during LU factorization."""


class NoConvergenceError(Exception):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


def _as_dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


@dataclass
class LUFactorization:
    """LU factors of a square nonsingular matrix, dense or sparse."""

    shape: tuple
    _dense: tuple | None = None
    _sparse: object | None = None

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        if self._sparse is not None:
            return self._sparse.solve(b)
        return sla.lu_solve(self._dense, b)


@dataclass
class PseudoInverse:
    """SVD-truncated Moore-Penrose pseudo-inverse of a dense matrix.

    Singular values below ``rank_tol`` times the largest one are treated
    as zero, so ``solve`` returns the minimum-norm least-squares solution.
    """

    shape: tuple
    rank: int
    rank_tol: float
    _u: np.ndarray = field(repr=False, default=None)
    _sinv: np.ndarray = field(repr=False, default=None)
    _vh: np.ndarray = field(repr=False, default=None)

    def solve(self, b):
        b = np.asarray(b, dtype=np.complex128)
        return self._vh.conj().T @ (self._sinv[:, None] * (self._u.conj().T @ b)
                                    if b.ndim == 2
                                    else self._sinv * (self._u.conj().T @ b))


def lu_factorize(m, pivot_tol=1e-10):
    """LU-factorize a square matrix, rejecting near-singular pivots.

    Raises SingularMatrixError when the smallest pivot magnitude falls
    below ``pivot_tol`` times the largest; callers treating resonant local
    problems should fall back to ``pseudo_inverse``.
    """
    if sp.issparse(m):
        m = m.tocsc()
        if m.shape[0] != m.shape[1]:
            raise ValueError("lu_factorize expects a square matrix")
        try:
            f = spla.splu(m.astype(np.complex128))
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        du = np.abs(f.U.diagonal())
        if du.size and du.min() <= pivot_tol * max(du.max(), 1.0):
            raise SingularMatrixError(
                f"pivot ratio {du.min() / max(du.max(), 1e-300):.3e} below {pivot_tol:.1e}"
            )
        return LUFactorization(shape=m.shape, _sparse=f)
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("lu_factorize expects a square matrix")
    lu, piv = sla.lu_factor(m, check_finite=False)
    du = np.abs(np.diag(lu))
    if du.size and du.min() <= pivot_tol * max(du.max(), 1.0):
        raise SingularMatrixError(
            f"pivot ratio {du.min() / max(du.max(), 1e-300):.3e} below {pivot_tol:.1e}"
        )
    return LUFactorization(shape=m.shape, _dense=(lu, piv))


def pseudo_inverse(m, rank_tol=1e-10):
    """SVD pseudo-inverse of a dense matrix with relative rank tolerance."""
    m = _as_dense(m).astype(np.complex128)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        keep = np.zeros(s.shape, dtype=bool)
    else:
        keep = s > rank_tol * s[0]
    sinv = np.zeros_like(s)
    sinv[keep] = 1.0 / s[keep]
    return PseudoInverse(shape=m.shape, rank=int(keep.sum()), rank_tol=rank_tol,
                         _u=u, _sinv=sinv, _vh=vh)


def pseudo_apply(m, b, rank_tol=1e-10):
    """Return the minimum-norm least-squares solution ``m^+ b``."""
    return pseudo_inverse(m, rank_tol=rank_tol).solve(b)


def kernel_basis(m, rank_tol=1e-8):
    """Numerical rank and an orthonormal kernel basis of a dense matrix.

    Returns ``(rank, basis)`` where the columns of ``basis`` span the
    numerical null space (singular values below ``rank_tol * sigma_max``).
    """
    m = _as_dense(m).astype(np.complex128)
    nrows, ncols = m.shape
    _, s, vh = np.linalg.svd(m)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    basis = vh[rank:].conj().T if rank < ncols else np.zeros((ncols, 0), dtype=np.complex128)
    return rank, basis


def cg_solve(op, b, tol=1e-12, max_iter=None):
    """Conjugate gradients for a Hermitian positive definite operator action.

    ``op`` is a callable returning the operator applied to a vector. Stops
    when the 2-norm residual drops below ``tol * ||b||``; raises
    NoConvergenceError after ``max_iter`` (default 10n) iterations.
    """
    b = np.asarray(b, dtype=np.complex128)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    p = r.copy()
    rs = np.vdot(r, r).real
    for _ in range(max_iter):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        ap = op(p)
        alpha = rs / np.vdot(p, ap).real
        x += alpha * p
        r -= alpha * ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    if np.sqrt(rs) <= tol * bnorm:
        return x
    raise NoConvergenceError(
        f"CG stalled at relative residual {np.sqrt(rs) / bnorm:.3e} after {max_iter} iterations",
        iterations=max_iter, residual=np.sqrt(rs) / bnorm,
    )


def gmres_solve(op, b, tol=1e-6, restart=None, max_iter=None, x0=None,
                callback=None):
    """Restarted GMRES for a general linear operator action.

    Modified Gram-Schmidt Arnoldi with Givens rotations; ``restart=None``
    means full GMRES. Happy breakdown returns the exact solution. Raises
    NoConvergenceError when ``max_iter`` total iterations do not reach
    ``||op(x) - b|| <= tol * ||b||``.
    """
    b = np.asarray(b, dtype=np.complex128)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    m = n if restart is None else min(restart, n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.complex128)
    total = 0
    while total < max_iter:
        r = b - op(x) if (total > 0 or x0 is not None) else b.copy()
        beta = np.linalg.norm(r)
        if beta <= tol * bnorm:
            return x
        v = np.zeros((m + 1, n), dtype=np.complex128)
        h = np.zeros((m + 1, m), dtype=np.complex128)
        cs = np.zeros(m, dtype=np.complex128)
        sn = np.zeros(m, dtype=np.complex128)
        g = np.zeros(m + 1, dtype=np.complex128)
        v[0] = r / beta
        g[0] = beta
        k_used = 0
        for k in range(m):
            if total >= max_iter:
                break
            # copy: op may return its argument aliased and w is mutated below
            w = np.array(op(v[k]), dtype=np.complex128, copy=True)
            total += 1
            for j in range(k + 1):
                h[j, k] = np.vdot(v[j], w)
                w -= h[j, k] * v[j]
            h[k + 1, k] = np.linalg.norm(w)
            breakdown = h[k + 1, k].real <= 1e-14 * max(beta, 1e-300)
            if not breakdown:
                v[k + 1] = w / h[k + 1, k]
            for j in range(k):
                temp = cs[j].conjugate() * h[j, k] + sn[j].conjugate() * h[j + 1, k]
                h[j + 1, k] = -sn[j] * h[j, k] + cs[j] * h[j + 1, k]
                h[j, k] = temp
            denom = np.sqrt(abs(h[k, k]) ** 2 + abs(h[k + 1, k]) ** 2)
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k] = h[k, k] / denom
                sn[k] = h[k + 1, k] / denom
            h[k, k] = cs[k].conjugate() * h[k, k] + sn[k].conjugate() * h[k + 1, k]
            h[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k].conjugate() * g[k]
            k_used = k + 1
            if callback is not None:
                callback(abs(g[k + 1]) / bnorm)
            if abs(g[k + 1]) <= tol * bnorm or breakdown:
                break
        if k_used > 0:
            y = sla.solve_triangular(h[:k_used, :k_used], g[:k_used], check_finite=False)
            x = x + v[:k_used].T @ y
        r = b - op(x)
        if np.linalg.norm(r) <= tol * bnorm:
            return x
    res = np.linalg.norm(b - op(x)) / bnorm
    raise NoConvergenceError(
        f"GMRES stalled at relative residual {res:.3e} after {max_iter} iterations",
        iterations=max_iter, residual=res,
    )
