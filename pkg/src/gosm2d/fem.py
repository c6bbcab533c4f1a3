"""P1 Lagrange assembly: Helmholtz volume forms, loads, boundary mass, Riesz maps.

All assemblers work in the global mesh vertex numbering and return scipy
sparse matrices (or dense for the Schur-complement Riesz map); callers
restrict to block dof sets by slicing. The wavenumber coefficient is sampled
at a 3-point interior triangle rule so a pointwise sign condition on
Im{kappa^2} carries over to the discrete form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# interior 3-point rule, exact for quadratics
_TRI_BARY = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])
_TRI_W = np.full(3, 1.0 / 3.0)

# 2-point Gauss on [0,1], exact for cubics
_EDGE_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_EDGE_W = np.array([0.5, 0.5])


class DegenerateElement(Exception):
    pass


class SingularInterior(Exception):
    """The interior block of a Riesz-map Schur complement is not invertible."""


@dataclass
class MediumModel:
    """Wavenumber-squared field inside the mesh plus the exterior wavenumber."""

    kappa_squared: object          # callable (n,2)->complex, or scalar
    exterior_k: float

    def kappa_sq_at(self, points):
        if callable(self.kappa_squared):
            return np.asarray(self.kappa_squared(points), dtype=np.complex128)
        return np.full(points.shape[0], self.kappa_squared, dtype=np.complex128)


def _tri_geometry(mesh, tri_idx):
    tris = mesh.triangles[tri_idx]
    p = mesh.vertices[tris]              # (m, 3, 2)
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if areas.size and np.any(areas <= 1e-14 * np.abs(areas).mean()):
        raise DegenerateElement("triangle area below 1e-14 of the mean")
    return tris, p, areas


def _grads(p, areas):
    # gradient of barycentric basis i is rot90(edge opposite i) / (2 area)
    g = np.empty((p.shape[0], 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        g[:, i, 0] = -e[:, 1]
        g[:, i, 1] = e[:, 0]
    return g / (2.0 * areas[:, None, None])


def _scatter(tris, local, n, dtype):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel().astype(dtype), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh, tri_idx):
    """Global P1 stiffness matrix of the given triangles (exact integration)."""
    tris, p, areas = _tri_geometry(mesh, tri_idx)
    g = _grads(p, areas)
    local = np.einsum("tid,tjd->tij", g, g) * areas[:, None, None]
    return _scatter(tris, local, mesh.n_vertices, np.float64)


def assemble_mass(mesh, tri_idx):
    """Global P1 mass matrix (exact integration)."""
    tris, p, areas = _tri_geometry(mesh, tri_idx)
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = areas[:, None, None] * base[None, :, :]
    return _scatter(tris, local, mesh.n_vertices, np.float64)


def assemble_weighted_mass(mesh, tri_idx, coeff):
    """P1 mass matrix with the coefficient sampled at the 3-point rule."""
    tris, p, areas = _tri_geometry(mesh, tri_idx)
    pts = np.einsum("qk,tkd->tqd", _TRI_BARY, p)
    if callable(coeff):
        c = np.asarray(coeff(pts.reshape(-1, 2)), dtype=np.complex128).reshape(pts.shape[:2])
    else:
        c = np.full(pts.shape[:2], coeff, dtype=np.complex128)
    # phi_i at quadrature point q is the barycentric coordinate itself
    local = np.einsum("tq,q,qi,qj->tij", c, _TRI_W, _TRI_BARY, _TRI_BARY)
    local = local * areas[:, None, None]
    return _scatter(tris, local, mesh.n_vertices, np.complex128)


def assemble_helmholtz(mesh, tri_idx, kappa_squared):
    """Galerkin matrix of the volume Helmholtz form: stiffness minus
    the kappa^2-weighted mass."""
    k = assemble_stiffness(mesh, tri_idx).astype(np.complex128)
    return k - assemble_weighted_mass(mesh, tri_idx, kappa_squared)


def assemble_load(mesh, tri_idx, f):
    """Load vector of a volume source via the 3-point rule."""
    tris, p, areas = _tri_geometry(mesh, tri_idx)
    pts = np.einsum("qk,tkd->tqd", _TRI_BARY, p)
    if callable(f):
        vals = np.asarray(f(pts.reshape(-1, 2)), dtype=np.complex128).reshape(pts.shape[:2])
    else:
        vals = np.full(pts.shape[:2], f, dtype=np.complex128)
    local = np.einsum("tq,q,qi->ti", vals, _TRI_W, _TRI_BARY) * areas[:, None]
    out = np.zeros(mesh.n_vertices, dtype=np.complex128)
    np.add.at(out, tris.ravel(), local.ravel())
    return out


def boundary_mass(mesh, edges):
    """Global P1 mass matrix of a set of straight boundary edges (exact)."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = mesh.n_vertices
    if edges.shape[0] == 0:
        return sp.csr_matrix((n, n))
    p = mesh.vertices[edges]
    h = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = h[:, None, None] * base[None]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def boundary_load(mesh, edges, g):
    """Vector of ``integral g phi_i`` over the edges, 2-point Gauss."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    out = np.zeros(mesh.n_vertices, dtype=np.complex128)
    if edges.shape[0] == 0:
        return out
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    h = np.linalg.norm(b - a, axis=1)
    for t, w in zip(_EDGE_T, _EDGE_W):
        pts = (1 - t) * a + t * b
        vals = np.asarray(g(pts), dtype=np.complex128)
        np.add.at(out, edges[:, 0], w * h * vals * (1 - t))
        np.add.at(out, edges[:, 1], w * h * vals * t)
    return out


def restrict(matrix, dofs):
    """Square submatrix on the given global dofs (keeps sparsity)."""
    return matrix[np.ix_(dofs, dofs)] if isinstance(matrix, np.ndarray) \
        else matrix[dofs][:, dofs]


def eliminate_dirichlet(a, rhs, free, values):
    """Dof elimination with right-hand-side lift.

    ``free`` is a boolean mask over the matrix dofs, ``values`` the Dirichlet
    data on the constrained dofs (full-length array). Returns the reduced
    matrix and right-hand side on the free dofs.
    """
    free = np.asarray(free, dtype=bool)
    fixed = ~free
    a = a.tocsr() if sp.issparse(a) else a
    a_ff = a[free][:, free] if sp.issparse(a) else a[np.ix_(free, free)]
    a_fc = a[free][:, fixed] if sp.issparse(a) else a[np.ix_(free, fixed)]
    lifted = rhs[free] - a_fc @ values[fixed]
    return a_ff, lifted


def h1_gram(mesh, tri_idx, k_norm):
    """SPD matrix realizing ||grad v||^2 + k_norm^2 ||v||^2 on the triangles."""
    return (assemble_stiffness(mesh, tri_idx)
            + (k_norm ** 2) * assemble_mass(mesh, tri_idx)).real


def discrete_h12_riesz(g_spd, boundary_idx):
    """Dense Schur complement of an SPD volume matrix onto boundary dofs.

    Realizes the discrete minimal-extension (trace) norm: the quadratic form
    of the result equals ``min { u^T G u : u restricted to the boundary = v }``.
    """
    g_spd = sp.csc_matrix(g_spd)
    n = g_spd.shape[0]
    boundary_idx = np.asarray(boundary_idx, dtype=np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[boundary_idx] = True
    interior = np.nonzero(~mask)[0]
    g_bb = g_spd[boundary_idx][:, boundary_idx].toarray()
    if interior.size == 0:
        return 0.5 * (g_bb + g_bb.T)
    g_bi = g_spd[boundary_idx][:, interior]
    g_ii = g_spd[interior][:, interior]
    try:
        lu = spla.splu(g_ii)
    except RuntimeError as exc:
        raise SingularInterior(str(exc)) from exc
    du = np.abs(lu.U.diagonal())
    if du.min() <= 1e-14 * du.max():
        raise SingularInterior("interior block numerically singular")
    x = lu.solve(g_bi.T.toarray())
    t = g_bb - g_bi @ x
    return 0.5 * (t + t.T)
