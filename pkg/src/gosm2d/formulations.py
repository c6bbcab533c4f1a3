"""Boundary blocks for BC/coupling variants and the monolithic Galerkin system.

Every boundary block acts on a (trace, density) pair over one closed
surface; duality pairings are realized by the P1 boundary mass matrix, so
identity entries of the continuous operators become mass blocks. The
monolithic operator is the congruence of the block-diagonal operator with
the Boolean restriction map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

WEAK_DIRICHLET = "weak_dirichlet"
WEAK_NEUMANN = "weak_neumann"
COSTABEL = "costabel"
JOHNSON_NEDELEC = "johnson_nedelec"
BIELAK_MACCAMY = "bielak_maccamy"

COUPLINGS = (COSTABEL, JOHNSON_NEDELEC, BIELAK_MACCAMY)


class MissingIngredient(Exception):
    pass


class DimensionMismatch(Exception):
    pass


@dataclass
class BoundaryBlock:
    """Dense Galerkin matrix of one 2x2 boundary operator, with its mass."""

    variant: str
    matrix: np.ndarray
    mass: np.ndarray

    @property
    def n_trace(self):
        return self.mass.shape[0]


def build_boundary_block(variant, mass, bios=None, riesz=None):
    """Galerkin matrix of the chosen boundary condition / coupling.

    ``mass`` is the P1 mass matrix of the surface (realizes every identity
    pairing); couplings need the assembled boundary-integral matrices and
    the weak Neumann condition needs the discrete trace-norm Riesz map.
    """
    m = np.asarray(mass.toarray() if sp.issparse(mass) else mass, dtype=np.float64)
    n = m.shape[0]
    z = np.zeros((n, n))
    if variant == WEAK_DIRICHLET:
        a = np.block([[z, m], [m, z]]).astype(np.complex128)
    elif variant == WEAK_NEUMANN:
        if riesz is None:
            raise MissingIngredient("weak Neumann needs the trace-norm Riesz map")
        a = np.block([[z, z], [z, m @ np.linalg.solve(riesz, m)]]).astype(np.complex128)
    elif variant in COUPLINGS:
        if bios is None:
            raise MissingIngredient(f"{variant} coupling needs boundary integral operators")
        if bios.v.shape[0] != n:
            raise DimensionMismatch("BIO matrices and mass disagree in size")
        half = 0.5 * m
        if variant == COSTABEL:
            a = np.block([[bios.w, half + bios.kp], [half - bios.k, -bios.v]])
        elif variant == JOHNSON_NEDELEC:
            a = np.block([[z, m], [half - bios.k, -bios.v]])
        else:
            a = np.block([[z, half + bios.kp], [m, -bios.v]])
        a = a.astype(np.complex128)
    else:
        raise ValueError(f"unknown boundary variant {variant!r}")
    return BoundaryBlock(variant=variant, matrix=a, mass=m)


def boundary_block_rhs(block, data=None):
    """Right-hand side of a boundary block.

    Weak Dirichlet data pairs against the density tests, weak Neumann data
    against the trace tests; couplings are homogeneous.
    """
    n = block.n_trace
    rhs = np.zeros(2 * n, dtype=np.complex128)
    if data is None:
        return rhs
    g = np.asarray(data, dtype=np.complex128)
    if g.shape != (n,):
        raise DimensionMismatch("boundary data length mismatch")
    if block.variant == WEAK_DIRICHLET:
        rhs[n:] = block.mass @ g
    elif block.variant == WEAK_NEUMANN:
        rhs[:n] = block.mass @ g
    elif np.any(g != 0):
        raise ValueError("coupling blocks take no boundary data")
    return rhs


@dataclass
class SignReport:
    variant: str
    max_im: float            # max over samples of Im{q(z)} / ||z||^2
    witness: np.ndarray | None
    witness_im: float | None

    @property
    def satisfied(self):
        return self.max_im <= 1e-10 and (self.witness is None or self.witness_im <= 0)


def sign_assumption_check(block, n_samples=1000, seed=0, search_witness=None):
    """Sample the dissipation sign of a boundary block.

    Reports the largest normalized ``Im{<A z, conj(z)>}`` over random
    samples. For the one-sided couplings a constructive witness with
    strictly positive imaginary part is searched (mirroring the failure
    mechanism: pair a trace against a rotated image of itself so the
    off-diagonal double-layer term contributes a positive imaginary part).
    """
    a = block.matrix
    n = block.n_trace
    m = block.mass
    rng = np.random.default_rng(seed)
    max_im = -np.inf
    for _ in range(n_samples):
        z = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
        q = np.vdot(z, a @ z)
        max_im = max(max_im, q.imag / np.vdot(z, z).real)

    if search_witness is None:
        search_witness = block.variant in (JOHNSON_NEDELEC, BIELAK_MACCAMY)
    witness = None
    witness_im = None
    if search_witness:
        if block.variant == JOHNSON_NEDELEC:
            # Im{q} = -Im{p^H (M/2 + K) u} - Im{p^H V p}; choose
            # p = i a (M^-1 (M/2 + K) u) so the first term is a ||.||_M^2
            half_plus_k = m - a[n:, :n]
            v_mat = -a[n:, n:]
            for _ in range(50):
                phi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                w = np.linalg.solve(m, half_plus_k @ phi)
                wm = np.real(np.vdot(w, m @ w))
                if wm <= 1e-12 * np.real(np.vdot(phi, phi)):
                    continue
                im_v = np.vdot(w, v_mat @ w).imag
                alpha = 1.0 if im_v <= 0 else 0.5 * wm / im_v
                z = np.concatenate([phi, 1j * alpha * w])
                q_im = np.vdot(z, a @ z).imag
                if q_im > 0:
                    witness = z
                    witness_im = q_im / np.vdot(z, z).real
                    break
        elif block.variant == BIELAK_MACCAMY:
            # Im{q} = -Im{u^H (M/2 - Kp) p} - Im{p^H V p}; scale the trace
            half_minus_kp = m - a[:n, n:]
            for _ in range(50):
                p = rng.standard_normal(n) + 1j * rng.standard_normal(n)
                w = np.linalg.solve(m, half_minus_kp @ p)
                wm = np.real(np.vdot(w, m @ w))
                if wm <= 1e-12 * np.real(np.vdot(p, p)):
                    continue
                im_v = np.vdot(p, (-a[n:, n:]) @ p).imag
                alpha = 2.0 * max(im_v, 0.0) / wm + 1.0
                z = np.concatenate([1j * alpha * w, p])
                q_im = np.vdot(z, a @ z).imag
                if q_im > 0:
                    witness = z
                    witness_im = q_im / np.vdot(z, z).real
                    break
    return SignReport(variant=block.variant, max_im=float(max_im),
                      witness=witness, witness_im=witness_im)


# ---------------------------------------------------------------------------
# monolithic assembly
# ---------------------------------------------------------------------------


@dataclass
class BlockOperator:
    """One diagonal block of the substructured operator: matrix plus load."""

    name: str
    matrix: object                 # sparse or dense complex, n_local x n_local
    load: np.ndarray

    @property
    def n_local(self):
        return self.matrix.shape[0]


@dataclass
class MonolithicSystem:
    """Global Galerkin system on (primal dofs, per-surface densities)."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    primal_vertices: np.ndarray        # mesh vertex id per primal dof
    density_slices: dict               # surface block name -> slice
    restriction: sp.csr_matrix         # script_R: stacked block rows
    block_slices: dict                 # block name -> slice in stacked space

    @property
    def n(self):
        return self.matrix.shape[0]

    def solve(self):
        return spla.splu(self.matrix.tocsc()).solve(self.rhs)


def build_script_r(trace_maps, block_ops):
    """Boolean restriction from (primal, densities) to stacked block dofs."""
    primal = sorted({int(v) for blk in trace_maps.blocks
                     for v in (blk.volume_vertices if blk.kind == "volume"
                               else blk.trace_vertices)})
    primal_vertices = np.array(primal, dtype=np.int64)
    primal_index = {v: i for i, v in enumerate(primal)}

    n_primal = len(primal)
    density_slices = {}
    offset = n_primal
    for blk in trace_maps.blocks:
        if blk.kind == "surface":
            density_slices[blk.name] = slice(offset, offset + blk.n_trace)
            offset += blk.n_trace
    n_global = offset

    rows, cols = [], []
    block_slices = {}
    row0 = 0
    for blk, op in zip(trace_maps.blocks, block_ops):
        if op.n_local != blk.n_local:
            raise DimensionMismatch(f"block {blk.name!r} operator size mismatch")
        if blk.kind == "volume":
            cols.extend(primal_index[int(v)] for v in blk.volume_vertices)
            rows.extend(range(row0, row0 + blk.n_local))
        else:
            cols.extend(primal_index[int(v)] for v in blk.trace_vertices)
            dsl = density_slices[blk.name]
            cols.extend(range(dsl.start, dsl.stop))
            rows.extend(range(row0, row0 + blk.n_local))
        block_slices[blk.name] = slice(row0, row0 + blk.n_local)
        row0 += blk.n_local
    script_r = sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                             shape=(row0, n_global))
    return script_r, primal_vertices, density_slices, block_slices


def assemble_monolithic(trace_maps, block_ops):
    """Congruence of the block-diagonal operator with the restriction map."""
    script_r, primal_vertices, density_slices, block_slices = \
        build_script_r(trace_maps, block_ops)
    blocks = [sp.csr_matrix(op.matrix) for op in block_ops]
    a_block = sp.block_diag(blocks, format="csr")
    a_full = (script_r.T @ a_block @ script_r).tocsc()
    ell = np.concatenate([np.asarray(op.load, dtype=np.complex128)
                          for op in block_ops])
    rhs = script_r.T @ ell
    return MonolithicSystem(matrix=a_full, rhs=rhs,
                            primal_vertices=primal_vertices,
                            density_slices=density_slices,
                            restriction=script_r,
                            block_slices=block_slices)
