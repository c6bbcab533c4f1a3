"""Substructured skeleton formulation: local scattering, exchange, iterations.

The skeleton unknown is the primal-represented multi-trace vector (one
sub-vector per block, concatenated). Local solvers factorize
``A_j - i B_j^T T_j B_j`` (LU, an enriched saddle system keeping a Schur
impedance implicit, or an SVD pseudo-inverse for resonance audits). The
exchange operator couples blocks through one conjugate-gradient solve with
the assembled skeleton impedance per application.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import impedance as imp
from . import linalg


class RankAmbiguity(Exception):
    """Singular values cluster at the rank tolerance; counts are unreliable."""


@dataclass
class LocalSolver:
    """Factorized local problem of one block."""

    mode: str                      # lu | enriched | pseudo
    n_local: int
    trace_idx: np.ndarray          # positions of trace dofs in the local vector
    t_dense: np.ndarray            # impedance in block trace ordering
    _lu: object = None
    _enriched: object = None       # (factorization, (n, m, t))
    _pinv: object = None
    _t_cho: object = field(default=None, repr=False)

    def solve_impedance_rhs(self, alpha, ell=None):
        """u with ``(A - i B^T T B) u = B^T T alpha + ell``."""
        if self.mode == "enriched":
            fact, (n, m, t) = self._enriched
            rhs = np.zeros(n + m + t, dtype=np.complex128)
            if ell is not None:
                rhs[:n] = ell
            rhs[n + m:] = 1j * alpha
            return fact.solve(rhs)[:n]
        rhs = np.zeros(self.n_local, dtype=np.complex128)
        rhs[self.trace_idx] = self.t_dense @ alpha
        if ell is not None:
            rhs = rhs + ell
        return self._pinv.solve(rhs) if self.mode == "pseudo" else self._lu.solve(rhs)

    def solve_dual_rhs(self, q, ell=None):
        """u with ``(A - i B^T T B) u = B^T q + ell`` (audit path)."""
        if self._t_cho is None:
            self._t_cho = sla.cho_factor(self.t_dense)
        return self.solve_impedance_rhs(sla.cho_solve(self._t_cho, q), ell)

    def apply_t(self, x):
        return self.t_dense @ x

    def solve_t(self, q):
        if self._t_cho is None:
            self._t_cho = sla.cho_factor(self.t_dense)
        return sla.cho_solve(self._t_cho, q)


def _assemble_condensed(op_matrix, trace_idx, t_dense):
    n = op_matrix.shape[0]
    t = len(trace_idx)
    if sp.issparse(op_matrix):
        rows = np.repeat(trace_idx, t)
        cols = np.tile(trace_idx, t)
        btb = sp.csr_matrix(((-1j) * t_dense.astype(np.complex128).ravel(),
                             (rows, cols)), shape=(n, n))
        return (op_matrix.astype(np.complex128) + btb).tocsc()
    h = np.array(op_matrix, dtype=np.complex128)
    h[np.ix_(trace_idx, trace_idx)] -= 1j * t_dense
    return h


def build_local_solver(op, blk, t_block, mode="lu", pivot_tol=1e-10,
                       rank_tol=1e-10, prefer_enriched=True):
    """Factorize one block; Schur impedances on sparse blocks stay implicit."""
    t_dense = t_block.dense() if isinstance(t_block, imp.ImpedanceBlock) \
        else np.asarray(t_block)
    trace_idx = blk.b_local
    use_enriched = (mode == "lu" and prefer_enriched
                    and isinstance(t_block, imp.ImpedanceBlock)
                    and t_block.schur is not None and sp.issparse(op.matrix))
    solver = LocalSolver(mode=mode, n_local=op.n_local, trace_idx=trace_idx,
                         t_dense=t_dense)
    if use_enriched:
        big, dims = imp.build_enriched_local(op.matrix, trace_idx, t_block.schur)
        solver.mode = "enriched"
        solver._enriched = (linalg.lu_factorize(big, pivot_tol=pivot_tol), dims)
    elif mode == "pseudo":
        h = _assemble_condensed(op.matrix, trace_idx, t_dense)
        h = h.toarray() if sp.issparse(h) else h
        solver._pinv = linalg.pseudo_inverse(h, rank_tol=rank_tol)
    else:
        h = _assemble_condensed(op.matrix, trace_idx, t_dense)
        solver._lu = linalg.lu_factorize(h, pivot_tol=pivot_tol)
    return solver


@dataclass
class SubstructuredSystem:
    """Blocks, factorized local solvers, impedances, and the exchange data."""

    blocks: list
    ops: list
    solvers: list
    n_skeleton: int
    exchange_tol: float = 1e-12
    offsets: np.ndarray = None

    def __post_init__(self):
        sizes = [blk.n_trace for blk in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])

    @property
    def n_multitrace(self):
        return int(self.offsets[-1])

    def split(self, x):
        return [x[self.offsets[j]:self.offsets[j + 1]]
                for j in range(len(self.blocks))]

    # -- exchange -----------------------------------------------------------

    def assemble_exchange_rhs(self, s):
        c = np.zeros(self.n_skeleton, dtype=np.complex128)
        for blk, solver, s_j in zip(self.blocks, self.solvers, self.split(s)):
            c[blk.r_skel] += solver.apply_t(s_j)
        return c

    def exchange_matvec(self, x):
        y = np.zeros_like(x)
        for blk, solver in zip(self.blocks, self.solvers):
            y[blk.r_skel] += solver.apply_t(x[blk.r_skel])
        return y

    def apply_exchange(self, s):
        """Modified exchange: ``2 R (R^T T R)^{-1} R^T T s - s``."""
        c = self.assemble_exchange_rhs(s)
        u = linalg.cg_solve(self.exchange_matvec, c, tol=self.exchange_tol)
        g = np.empty_like(s)
        for j, blk in enumerate(self.blocks):
            g[self.offsets[j]:self.offsets[j + 1]] = 2.0 * u[blk.r_skel] \
                - s[self.offsets[j]:self.offsets[j + 1]]
        return g

    def apply_exchange_dual(self, w):
        """Unmodified exchange on dual vectors: ``T Pi_tilde T^{-1} w``."""
        wt = np.empty_like(w)
        for j, solver in enumerate(self.solvers):
            wt[self.offsets[j]:self.offsets[j + 1]] = solver.solve_t(
                w[self.offsets[j]:self.offsets[j + 1]])
        g = self.apply_exchange(wt)
        out = np.empty_like(w)
        for j, solver in enumerate(self.solvers):
            out[self.offsets[j]:self.offsets[j + 1]] = solver.apply_t(
                g[self.offsets[j]:self.offsets[j + 1]])
        return out

    # -- scattering ---------------------------------------------------------

    def local_scatter(self, j, q_j):
        solver = self.solvers[j]
        u = solver.solve_impedance_rhs(q_j)
        return q_j + 2j * u[solver.trace_idx]

    def apply_scattering(self, q):
        s = np.empty_like(q)
        for j in range(len(self.blocks)):
            s[self.offsets[j]:self.offsets[j + 1]] = self.local_scatter(
                j, q[self.offsets[j]:self.offsets[j + 1]])
        return s

    def apply_iteration_operator(self, q):
        """(Id + Pi_tilde S_tilde) q."""
        return q + self.apply_exchange(self.apply_scattering(q))

    # -- right-hand side and reconstruction ---------------------------------

    def build_rhs(self):
        """b = -2i Pi_tilde B (A - i B^T T B)^+ ell, one local solve per block."""
        w = np.zeros(self.n_multitrace, dtype=np.complex128)
        for j, (blk, op, solver) in enumerate(zip(self.blocks, self.ops,
                                                  self.solvers)):
            u = solver.solve_impedance_rhs(np.zeros(blk.n_trace), ell=op.load)
            w[self.offsets[j]:self.offsets[j + 1]] = u[solver.trace_idx]
        return -2j * self.apply_exchange(w)

    def reconstruct(self, q_tilde):
        """Volume/density unknowns and the dual trace from a skeleton iterate."""
        us = []
        for j, (blk, op, solver) in enumerate(zip(self.blocks, self.ops,
                                                  self.solvers)):
            q_j = q_tilde[self.offsets[j]:self.offsets[j + 1]]
            us.append(solver.solve_impedance_rhs(q_j, ell=op.load))
        g = self.apply_exchange(q_tilde)
        ps = []
        for j, solver in enumerate(self.solvers):
            q_j = q_tilde[self.offsets[j]:self.offsets[j + 1]]
            g_j = g[self.offsets[j]:self.offsets[j + 1]]
            ps.append(0.5 * solver.apply_t(q_j - g_j))
        return us, ps

    # -- norms ----------------------------------------------------------------

    def t_norm(self, x):
        acc = 0.0
        for j, solver in enumerate(self.solvers):
            piece = x[self.offsets[j]:self.offsets[j + 1]]
            acc += np.vdot(piece, solver.apply_t(piece)).real
        return float(np.sqrt(max(acc, 0.0)))

    def tinv_norm(self, q):
        acc = 0.0
        for j, solver in enumerate(self.solvers):
            piece = q[self.offsets[j]:self.offsets[j + 1]]
            acc += np.vdot(piece, solver.solve_t(piece)).real
        return float(np.sqrt(max(acc, 0.0)))

    def t_matrix(self):
        return sla.block_diag(*[s.t_dense for s in self.solvers])


def build_system(trace_maps, block_ops, impedance_blocks, mode="lu",
                 exchange_tol=1e-12, prefer_enriched=True):
    solvers = [build_local_solver(op, blk, t_blk, mode=mode,
                                  prefer_enriched=prefer_enriched)
               for blk, op, t_blk in zip(trace_maps.blocks, block_ops,
                                         impedance_blocks)]
    return SubstructuredSystem(blocks=trace_maps.blocks, ops=block_ops,
                               solvers=solvers,
                               n_skeleton=trace_maps.n_skeleton,
                               exchange_tol=exchange_tol)


# ---------------------------------------------------------------------------
# outer iterations
# ---------------------------------------------------------------------------


@dataclass
class IterationResult:
    q_tilde: np.ndarray
    converged: bool
    n_iterations: int
    residuals: list
    t_norm_history: list | None = None


def richardson_solve(system, b_tilde, beta=0.5, eps=1e-6, max_iter=30000,
                     q0=None, track_error_from=None):
    """Relaxed Richardson iteration on ``(Id + Pi S) q = b`` (2-norm stop).

    The stopping criterion is relative to the initial residual. When
    ``track_error_from`` (a reference solution) is given, the T-norm error
    history is recorded for convergence-rate audits.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("relaxation parameter must lie in (0, 1)")
    q = np.zeros(system.n_multitrace, dtype=np.complex128) if q0 is None \
        else np.array(q0, dtype=np.complex128)
    r = b_tilde - system.apply_iteration_operator(q)
    r0 = np.linalg.norm(r)
    residuals = [r0]
    t_err = None
    if track_error_from is not None:
        t_err = [system.t_norm(q - track_error_from)]
    if r0 == 0.0:
        return IterationResult(q, True, 0, residuals, t_err)
    n = 0
    while n < max_iter:
        q = q + beta * r
        r = b_tilde - system.apply_iteration_operator(q)
        n += 1
        residuals.append(np.linalg.norm(r))
        if track_error_from is not None:
            t_err.append(system.t_norm(q - track_error_from))
        if residuals[-1] <= eps * r0:
            return IterationResult(q, True, n, residuals, t_err)
    raise linalg.NoConvergenceError(
        f"Richardson stalled at {residuals[-1] / r0:.3e} after {max_iter} iterations",
        iterations=max_iter, residual=residuals[-1] / r0)


def gmres_outer(system, b_tilde, eps=1e-6, restart=None, max_iter=None):
    """GMRES on the skeleton operator (for couplings without the sign bound)."""
    residuals = []
    x = linalg.gmres_solve(system.apply_iteration_operator, b_tilde, tol=eps,
                           restart=restart, max_iter=max_iter,
                           callback=residuals.append)
    return IterationResult(x, True, len(residuals),
                           [np.linalg.norm(b_tilde)] + residuals)


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


def cauchy_membership(system, j, v_j, p_j):
    """Residual of the scattering characterization of local Cauchy pairs.

    Returns ``||p + iTv - S(p - iTv)||_{T^-1} / ||(v, p)||`` for block j;
    zero (up to solver accuracy) exactly on Cauchy data of the block.
    """
    solver = system.solvers[j]
    tv = solver.apply_t(v_j)
    q_minus = p_j - 1j * tv
    q_plus = p_j + 1j * tv
    u = solver.solve_dual_rhs(q_minus)
    s_q = q_minus + 2j * solver.apply_t(u[solver.trace_idx])
    num = s_q - q_plus
    num_t = float(np.sqrt(max(np.vdot(num, solver.solve_t(num)).real, 0.0)))
    den = np.sqrt(max(np.vdot(v_j, tv).real
                      + np.vdot(p_j, solver.solve_t(p_j)).real, 0.0))
    if den == 0.0:
        return 0.0
    return num_t / den


def dense_iteration_operator(system):
    """Column-by-column assembly of Id + Pi_tilde S_tilde (diagnostics only)."""
    n = system.n_multitrace
    cols = np.empty((n, n), dtype=np.complex128)
    e = np.zeros(n, dtype=np.complex128)
    for i in range(n):
        e[i] = 1.0
        cols[:, i] = system.apply_iteration_operator(e)
        e[i] = 0.0
    return cols


def _rank_from_singular_values(s, rank_tol):
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return 0, s
    thresh = rank_tol * smax
    near = (s > thresh / 10.0) & (s < thresh * 10.0)
    if np.any(near):
        raise RankAmbiguity(
            f"{int(near.sum())} singular values within a factor 10 of the "
            f"rank threshold {thresh:.3e}")
    return int(np.sum(s > thresh)), s


def kernel_dimension_audit(system, monolithic_matrix, rank_tol=1e-8):
    """Kernel dimensions of the monolithic matrix, the shared local kernel,
    and the skeleton operator; the three satisfy an exact integer identity.
    """
    a_full = monolithic_matrix.toarray() if sp.issparse(monolithic_matrix) \
        else np.asarray(monolithic_matrix)
    s_full = np.linalg.svd(a_full, compute_uv=False)
    n_full, _ = _rank_from_singular_values(s_full, rank_tol)
    dim_full = a_full.shape[1] - n_full

    blocks_a = [sp.csr_matrix(op.matrix) for op in system.ops]
    a_diag = sp.block_diag(blocks_a, format="csr")
    b_rows = []
    for blk in system.blocks:
        b_rows.append(sp.csr_matrix(
            (np.ones(blk.n_trace), (np.arange(blk.n_trace), blk.b_local)),
            shape=(blk.n_trace, blk.n_local)))
    b_diag = sp.block_diag(b_rows, format="csr")
    stacked = sp.vstack([a_diag, b_diag]).toarray()
    s_stack = np.linalg.svd(stacked, compute_uv=False)
    n_stack, _ = _rank_from_singular_values(s_stack, rank_tol)
    dim_shared = stacked.shape[1] - n_stack

    l_dense = dense_iteration_operator(system)
    s_l = np.linalg.svd(l_dense, compute_uv=False)
    n_l, _ = _rank_from_singular_values(s_l, rank_tol)
    dim_skeleton = l_dense.shape[1] - n_l
    return {"dim_full": dim_full, "dim_shared": dim_shared,
            "dim_skeleton": dim_skeleton}


def coercivity_diagnostics(system, monolithic, primal_gram, block_grams,
                           riesz_blocks):
    """Spectral quantities tying the monolithic and skeleton formulations.

    Returns gamma_h (skeleton inf-sup in the T metric), tau_h, the monolithic
    inf-sup alpha_h, the extremal trace constants, the continuity modulus of
    the block operator, and the two inequality margins.
    """
    t_mat = system.t_matrix()
    l_dense = dense_iteration_operator(system)
    pencil = l_dense.conj().T @ t_mat @ l_dense
    gvals = sla.eigh(0.5 * (pencil + pencil.conj().T), t_mat, eigvals_only=True)
    gamma_h = float(np.sqrt(max(gvals.min(), 0.0)))
    tau_h = float(np.sqrt(1.0 - gamma_h ** 2 / 4.0))

    a_full = monolithic.matrix.toarray() if sp.issparse(monolithic.matrix) \
        else np.asarray(monolithic.matrix)
    g = primal_gram.toarray() if sp.issparse(primal_gram) else np.asarray(primal_gram)
    ginv_a = np.linalg.solve(g, a_full)
    pencil_a = a_full.conj().T @ ginv_a
    avals = sla.eigh(0.5 * (pencil_a + pencil_a.conj().T), g, eigvals_only=True)
    alpha_h = float(np.sqrt(max(avals.min(), 0.0)))

    t_minus, t_plus = np.inf, 0.0
    a_norm = 0.0
    for solver, riesz in zip(system.solvers, riesz_blocks):
        lo, hi = imp.trace_singular_values(solver.t_dense, riesz)
        t_minus, t_plus = min(t_minus, lo), max(t_plus, hi)
    for op, gram in zip(system.ops, block_grams):
        a_j = op.matrix.toarray() if sp.issparse(op.matrix) else np.asarray(op.matrix)
        gj = gram.toarray() if sp.issparse(gram) else np.asarray(gram)
        pencil_j = a_j.conj().T @ np.linalg.solve(gj, a_j)
        vals = sla.eigh(0.5 * (pencil_j + pencil_j.conj().T), gj,
                        eigvals_only=True)
        a_norm = max(a_norm, float(np.sqrt(max(vals.max(), 0.0))))

    constant = t_plus ** 2 + (2.0 * a_norm / t_minus) ** 2
    re_form = t_mat @ l_dense
    re_vals = sla.eigh(0.5 * (re_form + re_form.conj().T), t_mat,
                       eigvals_only=True)
    re_coercivity = float(re_vals.min())
    return {
        "gamma_h": gamma_h, "tau_h": tau_h, "alpha_h": alpha_h,
        "t_minus": float(t_minus), "t_plus": float(t_plus), "a_norm": a_norm,
        "infsup_bound_margin": constant * gamma_h - alpha_h,
        "re_coercivity": re_coercivity,
        "coercivity_bound_margin": re_coercivity - 0.5 * (alpha_h / constant) ** 2,
    }
