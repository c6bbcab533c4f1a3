"""2D Galerkin boundary integral operators for Helmholtz and Yukawa kernels.

Kernel normalization: the outgoing Helmholtz kernel is (i/4) H0^(1)(k r),
the Yukawa (positive Helmholtz) kernel K0(k r)/(2 pi) -- the constants that
satisfy the jump relations underlying the coupling formulations.

Quadrature:
  * regular panel pairs: tensor Gauss-Legendre,
  * self pairs: exact P1 moments of the log singularity plus a graded rule
    in the coincidence variable for the smooth remainder,
  * adjacent pairs: tensor quadrature geometrically graded into the shared
    corner.
The hypersingular operator uses the integration-by-parts form
``<W phi, psi> = iint G phi' psi' - k^2 iint G (n.n') phi psi`` (the sign of
k^2 flips for the Yukawa kernel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special as ss

EULER_GAMMA = 0.5772156649015328606

# exact moments of ln|s-t| against P1 x P1 on the unit square:
# iint ln|s-t| = -3/2,  iint s ln|s-t| = -3/4,  iint s t ln|s-t| = -7/16
_LOG_D = np.array([[-7.0 / 16.0, -5.0 / 16.0],
                   [-5.0 / 16.0, -7.0 / 16.0]])
_LOG_C = np.full((2, 2), 0.25)


class DomainError(Exception):
    pass


class OpenChain(Exception):
    pass


class OrientationError(Exception):
    pass


# ---------------------------------------------------------------------------
# special functions (scipy-backed, with domain guards)
# ---------------------------------------------------------------------------

def hankel_h1(order, x):
    """Hankel function of the first kind, order 0 or 1, for x > 0."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise DomainError("hankel_h1 requires x > 0")
    return ss.hankel1(order, x)


def bessel_j(order, x):
    return ss.jv(order, np.asarray(x, dtype=np.float64))


def bessel_y(order, x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise DomainError("bessel_y requires x > 0")
    return ss.yv(order, x)


def bessel_k0_k1(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise DomainError("bessel_k0_k1 requires x > 0")
    return ss.k0(x), ss.k1(x)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kernel2D:
    """Radial fundamental solution: 'helmholtz' (outgoing) or 'yukawa'."""

    kind: str
    k: float

    def __post_init__(self):
        if self.kind not in ("helmholtz", "yukawa"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.k <= 0:
            raise ValueError("wavenumber must be positive")

    def value(self, r):
        r = np.asarray(r)
        if self.kind == "helmholtz":
            return 0.25j * ss.hankel1(0, self.k * r)
        return ss.k0(self.k * r) / (2.0 * np.pi)

    def dvalue(self, r):
        r = np.asarray(r)
        if self.kind == "helmholtz":
            return -0.25j * self.k * ss.hankel1(1, self.k * r)
        return -self.k * ss.k1(self.k * r) / (2.0 * np.pi)

    def log_remainder(self, r):
        """G(r) + ln(r) / (2 pi); finite limit at r = 0."""
        r = np.asarray(r, dtype=np.float64)
        out = np.empty(r.shape, dtype=np.complex128)
        small = r < 1e-140
        safe = np.where(small, 1.0, r)
        out[:] = self.value(safe) + np.log(safe) / (2.0 * np.pi)
        if self.kind == "helmholtz":
            limit = 0.25j - (np.log(self.k / 2.0) + EULER_GAMMA) / (2.0 * np.pi)
        else:
            limit = (-np.log(self.k / 2.0) - EULER_GAMMA) / (2.0 * np.pi) + 0.0j
        out[small] = limit
        return out

    @property
    def maue_k2(self):
        """Squared wavenumber entering the integration-by-parts form of W."""
        return self.k ** 2 if self.kind == "helmholtz" else -self.k ** 2


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def _gauss01(n):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _graded01(n_per_cell=8, ratio=0.15, levels=5):
    """Composite Gauss rule on [0,1] graded geometrically toward 0."""
    xg, wg = _gauss01(n_per_cell)
    cuts = [1.0] + [ratio ** (m + 1) for m in range(levels)] + [0.0]
    xs, ws = [], []
    for hi, lo in zip(cuts[:-1], cuts[1:]):
        xs.append(lo + (hi - lo) * xg)
        ws.append((hi - lo) * wg)
    return np.concatenate(xs), np.concatenate(ws)


def _p1(t):
    """P1 basis values on [0,1]: rows (start, end)."""
    return np.stack([1.0 - t, t])


@dataclass
class BioMatrices:
    """Dense Galerkin boundary-integral matrices on one closed P1 chain.

    ``kp`` is the block that enters couplings as ``Id/2 + kp``-type terms,
    i.e. the Galerkin matrix of minus the adjoint double layer operator.
    """

    v: np.ndarray
    k: np.ndarray
    kp: np.ndarray
    w: np.ndarray
    mass: np.ndarray
    chain: object
    kernel: Kernel2D


def chain_mass(chain):
    """Cyclic P1 mass matrix of a closed chain (exact)."""
    n = chain.n
    h = chain.seg_lengths
    m = np.zeros((n, n))
    i = np.arange(n)
    j = (i + 1) % n
    np.add.at(m, (i, i), h / 3.0)
    np.add.at(m, (j, j), h / 3.0)
    np.add.at(m, (i, j), h / 6.0)
    np.add.at(m, (j, i), h / 6.0)
    return m


def assemble_bios(chain, kernel, n_gauss=8, chunk=48):
    """Assemble V, K, K-tilde and W Galerkin matrices on a closed chain.

    The chain must run counterclockwise (normals toward the exterior of the
    enclosed region); raises OrientationError otherwise.
    """
    if chain.signed_area() <= 0:
        raise OrientationError("chain must be counterclockwise (positive area)")
    n = chain.n
    if n < 4:
        raise OpenChain("need at least 4 panels on a closed chain")

    a = chain.seg_starts
    vec = chain.seg_vectors
    lengths = chain.seg_lengths
    normals = chain.normals
    dof0 = np.arange(n)
    dof1 = (dof0 + 1) % n

    v_mat = np.zeros((n, n), dtype=np.complex128)
    k_mat = np.zeros((n, n), dtype=np.complex128)
    kp_mat = np.zeros((n, n), dtype=np.complex128)
    wnn_mat = np.zeros((n, n), dtype=np.complex128)  # (n.n') G phi phi term
    i00 = np.zeros((n, n), dtype=np.complex128)      # P0 x P0 double integral of G

    sg, wg = _gauss01(n_gauss)
    basis = _p1(sg)                                   # (2, g)
    pts = a[:, None, :] + sg[None, :, None] * vec[:, None, :]   # (n, g, 2)

    flat = {"v": v_mat.ravel(), "k": k_mat.ravel(), "kp": kp_mat.ravel(),
            "wnn": wnn_mat.ravel(), "i00": i00.ravel()}

    def scatter(name, rows_p, cols_q, blocks):
        # blocks: (..., 2, 2) per (row panel, col panel); unique flat targets
        # for each fixed (alpha, beta), so fancy-index add is collision-free
        tgt = flat[name]
        for alpha in range(2):
            rdof = dof1[rows_p] if alpha else dof0[rows_p]
            for beta in range(2):
                cdof = dof1[cols_q] if beta else dof0[cols_q]
                tgt[rdof * n + cdof] += blocks[..., alpha, beta].ravel()

    def scatter00(rows_p, cols_q, vals):
        flat["i00"][rows_p * n + cols_q] += vals.ravel()

    # ---- regular (non-touching) ordered pairs, chunked over row panels ----
    for start in range(0, n, chunk):
        rows = np.arange(start, min(start + chunk, n))
        cols = np.arange(n)
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        sep = (cc - rr) % n
        keep = (sep != 0) & (sep != 1) & (sep != n - 1)
        rr, cc = rr[keep], cc[keep]
        if rr.size == 0:
            continue
        dx = pts[rr][:, :, None, 0] - pts[cc][:, None, :, 0]   # (m, g, g)
        dy = pts[rr][:, :, None, 1] - pts[cc][:, None, :, 1]
        r = np.sqrt(dx * dx + dy * dy)
        g_val = kernel.value(r)
        dg = kernel.dvalue(r) / r
        ndy = normals[cc, 0][:, None, None] * dx + normals[cc, 1][:, None, None] * dy
        ndx = normals[rr, 0][:, None, None] * dx + normals[rr, 1][:, None, None] * dy
        kk = -dg * ndy          # d_{n(y)} G
        kkp = -dg * ndx         # paper's adjoint block kernel: -d_{n(x)} G
        jac = (lengths[rr] * lengths[cc])[:, None, None]
        wxy = (wg[:, None] * wg[None, :])[None]
        for name, kern in (("v", g_val), ("k", kk), ("kp", kkp)):
            integ = kern * wxy * jac
            blocks = np.einsum("mxy,ax,by->mab", integ, basis, basis)
            scatter(name, rr, cc, blocks)
        nn = np.einsum("md,md->m", normals[rr], normals[cc])
        integ = g_val * wxy * jac
        blocks = np.einsum("m,mxy,ax,by->mab", nn, integ, basis, basis)
        scatter("wnn", rr, cc, blocks)
        scatter00(rr, cc, np.einsum("mxy->m", integ))

    # ---- self pairs: exact log moments + graded coincidence rule ----------
    log_blocks = -(lengths[:, None, None] ** 2 / (2 * np.pi)) * (
        np.log(lengths)[:, None, None] * _LOG_C[None] + _LOG_D[None])
    vq, wq = _graded01(n_per_cell=8, ratio=0.15, levels=6)
    s3, w3 = _gauss01(3)     # exact for the quadratic sigma-integral
    rem_blocks = np.zeros((n, 2, 2), dtype=np.complex128)
    rem00 = np.zeros(n, dtype=np.complex128)
    for v_node, v_w in zip(vq, wq):
        span = 1.0 - v_node
        if span <= 0:
            continue
        sig = span * s3                                   # (3,)
        rem = kernel.log_remainder(lengths * v_node)      # (n,)
        for sgn in (+1.0, -1.0):
            s_pts = sig if sgn > 0 else sig + v_node
            t_pts = s_pts + sgn * v_node
            bs = _p1(s_pts)                               # (2, 3)
            bt = _p1(t_pts)
            acc = np.einsum("q,aq,bq->ab", w3 * span, bs, bt)
            rem_blocks += v_w * rem[:, None, None] * acc[None]
            rem00 += v_w * rem * (w3 * span).sum()
    rem_blocks *= lengths[:, None, None] ** 2
    rem00 *= lengths ** 2
    self_blocks = log_blocks + rem_blocks
    self00 = (-(lengths ** 2 / (2 * np.pi)) * (np.log(lengths) * _LOG_C.sum()
                                               + _LOG_D.sum()) + rem00)
    scatter("v", dof0, dof0, self_blocks)
    scatter00(dof0, dof0, self00)
    nn_self = np.ones(n)
    scatter("wnn", dof0, dof0, nn_self[:, None, None] * self_blocks)
    # K and K' vanish on flat self panels: n(y) . (x - y) = 0

    # ---- adjacent ordered pairs: graded tensor toward the shared corner ---
    ug, uw = _graded01(n_per_cell=8, ratio=0.15, levels=5)
    for offset in (1, n - 1):
        p_idx = np.arange(n)
        q_idx = (p_idx + offset) % n
        if offset == 1:
            s_par = 1.0 - ug      # shared vertex at end of P
            t_par = ug            # and start of Q
        else:
            s_par = ug            # shared vertex at start of P
            t_par = 1.0 - ug      # and end of Q
        xp = a[p_idx][:, None, :] + s_par[None, :, None] * vec[p_idx][:, None, :]
        yq = a[q_idx][:, None, :] + t_par[None, :, None] * vec[q_idx][:, None, :]
        dx = xp[:, :, None, 0] - yq[:, None, :, 0]
        dy = xp[:, :, None, 1] - yq[:, None, :, 1]
        r = np.sqrt(dx * dx + dy * dy)
        r = np.maximum(r, 1e-300)
        g_val = kernel.value(r)
        dg = kernel.dvalue(r) / r
        ndy = normals[q_idx, 0][:, None, None] * dx + normals[q_idx, 1][:, None, None] * dy
        ndx = normals[p_idx, 0][:, None, None] * dx + normals[p_idx, 1][:, None, None] * dy
        kk = -dg * ndy
        kkp = -dg * ndx
        jac = (lengths[p_idx] * lengths[q_idx])[:, None, None]
        wxy = (uw[:, None] * uw[None, :])[None]
        bs = _p1(s_par)
        bt = _p1(t_par)
        for name, kern in (("v", g_val), ("k", kk), ("kp", kkp)):
            integ = kern * wxy * jac
            blocks = np.einsum("mxy,ax,by->mab", integ, bs, bt)
            scatter(name, p_idx, q_idx, blocks)
        nn = np.einsum("md,md->m", normals[p_idx], normals[q_idx])
        integ = g_val * wxy * jac
        blocks = np.einsum("m,mxy,ax,by->mab", nn, integ, bs, bt)
        scatter("wnn", p_idx, q_idx, blocks)
        scatter00(p_idx, q_idx, np.einsum("mxy->m", integ))

    # ---- hypersingular from the integration-by-parts pieces ---------------
    w_mat = np.zeros((n, n), dtype=np.complex128)
    coef = np.stack([-1.0 / lengths, 1.0 / lengths])        # (2, n)
    wflat = w_mat.ravel()
    for alpha in range(2):
        rdof = dof1 if alpha else dof0
        ca = coef[alpha]
        for beta in range(2):
            cdof = dof1 if beta else dof0
            cb = coef[beta]
            contrib = (ca[:, None] * cb[None, :]) * i00
            np.add.at(wflat, (rdof[:, None] * n + cdof[None, :]).ravel(),
                      contrib.ravel())
    w_mat -= kernel.maue_k2 * wnn_mat

    # exact symmetrization: V and W are symmetric operators
    v_mat = 0.5 * (v_mat + v_mat.T)
    w_mat = 0.5 * (w_mat + w_mat.T)
    return BioMatrices(v=v_mat, k=k_mat, kp=kp_mat, w=w_mat,
                       mass=chain_mass(chain), chain=chain, kernel=kernel)


def calderon_residual(bios):
    """|| P^2 - P || / || P || for P = Id/2 + the block BIO operator.

    The Galerkin matrices are composed through mass-matrix inverses so P acts
    on coefficient vectors.
    """
    minv = np.linalg.inv(bios.mass)
    top = np.hstack([minv @ bios.k, minv @ bios.v])
    bot = np.hstack([minv @ bios.w, minv @ bios.kp])
    p = 0.5 * np.eye(2 * bios.chain.n) + np.vstack([top, bot])
    num = np.linalg.norm(p @ p - p, 2)
    return num / np.linalg.norm(p, 2)


def layer_potential(chain, kernel, dirichlet, neumann, points, n_gauss=12):
    """Evaluate the total layer potential away from the chain.

    ``dirichlet`` and ``neumann`` are P1 coefficient vectors on the chain
    vertices; ``points`` is (m, 2). Plain Gauss panelwise, so points should
    stay a few panel lengths away from the chain.
    """
    sg, wg = _gauss01(n_gauss)
    basis = _p1(sg)
    a = chain.seg_starts
    vec = chain.seg_vectors
    lengths = chain.seg_lengths
    normals = chain.normals
    n = chain.n
    dir_vals = (basis[0][None] * dirichlet[:, None]
                + basis[1][None] * np.roll(dirichlet, -1)[:, None])
    neu_vals = (basis[0][None] * neumann[:, None]
                + basis[1][None] * np.roll(neumann, -1)[:, None])
    y = a[:, None, :] + sg[None, :, None] * vec[:, None, :]     # (n, g, 2)
    points = np.asarray(points, dtype=np.float64)
    out = np.zeros(points.shape[0], dtype=np.complex128)
    for chunk_start in range(0, points.shape[0], 512):
        x = points[chunk_start:chunk_start + 512]
        dx = x[:, None, None, 0] - y[None, :, :, 0]
        dy = x[:, None, None, 1] - y[None, :, :, 1]
        r = np.sqrt(dx * dx + dy * dy)
        gv = kernel.value(r)
        dg = kernel.dvalue(r) / r
        ndoty = normals[None, :, 0, None] * dx + normals[None, :, 1, None] * dy
        dlp = -dg * ndoty
        integrand = dlp * dir_vals[None] + gv * neu_vals[None]
        out[chunk_start:chunk_start + 512] = np.einsum(
            "mpg,g,p->m", integrand, wg, lengths)
    return out
