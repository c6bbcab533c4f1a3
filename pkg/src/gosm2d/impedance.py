"""Impedance (transmission) operators: Despres, Yukawa hypersingular, Schur DtN.

Every block is real symmetric positive definite on its trace dof set; the
construction functions return the matrix in a caller-chosen trace ordering
so blocks align with the substructured skeleton bookkeeping.

The Schur-complement operator condenses the positive (Yukawa) volume form
of a boundary layer onto the interface, with a Robin mass term on the
artificial inner boundary of the layer. For factorization-friendly local
solves the layer system can be kept implicit through an enriched saddle
block instead of the dense condensed matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import bem, fem


class EmptyLayer(Exception):
    pass


class NotSymmetricPositive(Exception):
    pass


@dataclass
class SchurIngredients:
    """Implicit form of a Schur DtN block: the layer operator and trace map."""

    a_layer: sp.csr_matrix          # Yukawa volume form + Robin mass, layer dofs
    trace_positions: np.ndarray     # position of each interface dof in the layer
    layer_vertices: np.ndarray      # mesh vertex id per layer dof


@dataclass
class ImpedanceBlock:
    kind: str                       # despres | yukawa | schur_dtn
    matrix: object                  # real SPD, dense ndarray or sparse
    schur: SchurIngredients | None = None

    def dense(self):
        m = self.matrix
        return m.toarray() if sp.issparse(m) else np.asarray(m)

    def check_spd(self, tol=0.0):
        m = self.dense()
        if np.abs(m - m.T).max() > 1e-12 * max(np.abs(m).max(), 1e-300):
            raise NotSymmetricPositive(f"{self.kind} block is not symmetric")
        if np.linalg.eigvalsh(0.5 * (m + m.T)).min() <= tol:
            raise NotSymmetricPositive(f"{self.kind} block is not positive definite")
        return self


def _permute_to(matrix, current_vertices, order_vertices):
    pos = {int(v): i for i, v in enumerate(current_vertices)}
    idx = np.array([pos[int(v)] for v in order_vertices], dtype=np.int64)
    return matrix[np.ix_(idx, idx)]


def build_despres(mesh, edges, kappa, order_vertices):
    """kappa times the P1 boundary mass of the edges, in the given order."""
    if kappa <= 0:
        raise ValueError("Despres impedance needs kappa > 0")
    m = fem.boundary_mass(mesh, edges).tocsr()
    order_vertices = np.asarray(order_vertices, dtype=np.int64)
    sub = m[order_vertices][:, order_vertices].toarray()
    return ImpedanceBlock(kind="despres", matrix=kappa * sub)


def build_yukawa_impedance(chain, kappa, order_vertices=None):
    """Galerkin Yukawa hypersingular matrix on a closed chain (dense SPD)."""
    bios = bem.assemble_bios(chain, bem.Kernel2D("yukawa", kappa))
    w = bios.w.real.copy()
    if order_vertices is not None:
        w = _permute_to(w, chain.vertex_ids, order_vertices)
    return ImpedanceBlock(kind="yukawa", matrix=w)


def extract_layer(mesh, tri_idx, gamma_vertices, delta):
    """Element rings touching the interface until the covered depth >= delta.

    Returns the triangle indices of the layer. ``delta <= 0`` or a layer
    that exhausts the subdomain returns all triangles.
    """
    tri_idx = np.asarray(tri_idx, dtype=np.int64)
    if tri_idx.size == 0:
        raise EmptyLayer("subdomain has no elements")
    gamma_set = set(int(v) for v in gamma_vertices)
    if not gamma_set:
        raise EmptyLayer("interface has no vertices")
    gamma_pts = mesh.vertices[np.fromiter(gamma_set, dtype=np.int64)]
    tris = mesh.triangles[tri_idx]
    used = np.zeros(len(tri_idx), dtype=bool)
    reached = set(gamma_set)
    selected = []
    while True:
        touching = ~used & np.array([any(int(v) in reached for v in t) for t in tris])
        ring = np.nonzero(touching)[0]
        if ring.size == 0:
            break
        used[ring] = True
        selected.extend(tri_idx[ring])
        new_vertices = set(int(v) for v in tris[ring].ravel()) - reached
        reached |= new_vertices
        if not new_vertices:
            break
        front = mesh.vertices[np.fromiter(new_vertices, dtype=np.int64)]
        dists = np.min(np.linalg.norm(front[:, None, :] - gamma_pts[None], axis=2), axis=1)
        if dists.min() >= delta:
            break
    if not selected:
        raise EmptyLayer("no element touches the interface")
    return np.array(sorted(selected), dtype=np.int64)


def build_schur_dtn(mesh, tri_idx, gamma_edges, kappa, delta, order_vertices,
                    whole=False):
    """Schur-complement DtN impedance on the interface of a subdomain.

    Condenses ``stiffness + kappa^2 mass + kappa robin-mass(Gamma_s)`` of
    the extracted layer onto the interface dofs, ordered like
    ``order_vertices``. Keeps the layer system for the enriched
    factorization path.
    """
    gamma_edges = np.asarray(gamma_edges, dtype=np.int64).reshape(-1, 2)
    gamma_vertices = np.unique(gamma_edges)
    if whole or delta <= 0:
        layer_tris = np.asarray(tri_idx, dtype=np.int64)
    else:
        layer_tris = extract_layer(mesh, tri_idx, gamma_vertices, delta)

    a_vol = (fem.assemble_stiffness(mesh, layer_tris)
             + (kappa ** 2) * fem.assemble_mass(mesh, layer_tris))
    gamma_keys = {tuple(sorted(map(int, e))) for e in gamma_edges}
    from .mesh import _subdomain_boundary_edges
    bnd = _subdomain_boundary_edges(mesh, layer_tris)
    robin = np.array([e for e in bnd
                      if tuple(sorted(map(int, e))) not in gamma_keys],
                     dtype=np.int64).reshape(-1, 2)
    a_full = a_vol + kappa * fem.boundary_mass(mesh, robin)

    layer_vertices = np.unique(mesh.triangles[layer_tris])
    local_of = {int(v): i for i, v in enumerate(layer_vertices)}
    a_layer = sp.csr_matrix(fem.restrict(a_full.tocsr(), layer_vertices).real)
    order_vertices = np.asarray(order_vertices, dtype=np.int64)
    missing = [int(v) for v in order_vertices if int(v) not in local_of]
    if missing:
        raise EmptyLayer(f"interface dofs {missing[:4]} not covered by the layer")
    trace_positions = np.array([local_of[int(v)] for v in order_vertices],
                               dtype=np.int64)
    t_dense = fem.discrete_h12_riesz(a_layer, trace_positions)
    ingredients = SchurIngredients(a_layer=a_layer,
                                   trace_positions=trace_positions,
                                   layer_vertices=layer_vertices)
    return ImpedanceBlock(kind="schur_dtn", matrix=t_dense, schur=ingredients)


def build_enriched_local(a_j, trace_positions_j, schur):
    """Sparse saddle block keeping a Schur DtN impedance implicit.

    Solving ``[[A_j, 0, B_j^T], [0, -i A_s, -B'^T], [B_j, -B', 0]]
    (u, v, p) = (l, 0, i alpha)`` yields the same ``u`` as the condensed
    local problem ``(A_j - i B^T T B) u = B^T T alpha + l``.
    """
    a_j = sp.csr_matrix(a_j)
    n = a_j.shape[0]
    m = schur.a_layer.shape[0]
    t = len(trace_positions_j)
    if len(schur.trace_positions) != t:
        raise ValueError("trace size mismatch between subdomain and layer")
    b_j = sp.csr_matrix((np.ones(t), (np.arange(t), trace_positions_j)),
                        shape=(t, n))
    b_p = sp.csr_matrix((np.ones(t), (np.arange(t), schur.trace_positions)),
                        shape=(t, m))
    zero_nm = sp.csr_matrix((n, m))
    zero_tt = sp.csr_matrix((t, t))
    big = sp.bmat([
        [a_j, zero_nm, b_j.T],
        [zero_nm.T, -1j * schur.a_layer, -b_p.T],
        [b_j, -b_p, zero_tt],
    ], format="csc")
    return big, (n, m, t)


def trace_singular_values(t_block, riesz):
    """Extremal equivalence constants between an impedance and the trace norm.

    Returns ``(t_minus, t_plus)``: the square roots of the extremal
    generalized eigenvalues of ``t_block`` against the discrete trace-norm
    Riesz matrix. They coincide with the extremal singular values of the
    dual trace map measured in the impedance dual norm.
    """
    import scipy.linalg as sla
    t_dense = t_block.dense() if isinstance(t_block, ImpedanceBlock) else np.asarray(t_block)
    r = np.asarray(riesz, dtype=np.float64)
    vals = sla.eigh(0.5 * (t_dense + t_dense.T), 0.5 * (r + r.T),
                    eigvals_only=True)
    if vals.min() <= 0:
        raise NotSymmetricPositive("impedance block lost positivity")
    return float(np.sqrt(vals.min())), float(np.sqrt(vals.max()))


def block_diagonal(blocks):
    """Assemble the global block-diagonal impedance; validates SPD blocks."""
    mats = []
    for blk in blocks:
        blk.check_spd()
        mats.append(sp.csr_matrix(blk.dense()))
    return sp.block_diag(mats, format="csr")
