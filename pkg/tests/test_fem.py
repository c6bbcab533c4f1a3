import numpy as np
import pytest
import scipy.sparse as sp

from gosm2d import fem
from gosm2d import mesh as gm


def reference_triangle():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 2]])
    edges = np.array([[0, 1], [1, 2], [2, 0]])
    return gm.Mesh2D(verts, tris, np.array([10]), edges, np.array([1, 1, 1]))


class TestVolumeAssembly:
    def test_pure_stiffness_on_reference_triangle(self):
        # hand integration on the unit right triangle
        m = reference_triangle()
        a = fem.assemble_helmholtz(m, np.array([0]), 0.0).toarray()
        expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
        assert np.allclose(a, expected, atol=1e-14)

    def test_constant_kappa_equals_k_minus_kappa2_m(self):
        m = gm.annulus_mesh(1.0, 2.0, 3, 16)
        idx = np.arange(m.triangles.shape[0])
        kappa_sq = 7.3 + 0.4j
        a = fem.assemble_helmholtz(m, idx, kappa_sq)
        k = fem.assemble_stiffness(m, idx)
        mm = fem.assemble_mass(m, idx)
        assert abs((a - (k - kappa_sq * mm))).max() < 1e-12

    def test_complex_symmetric_no_conjugation(self):
        m = gm.disk_mesh(1.0, 4)
        idx = np.arange(m.triangles.shape[0])
        kap = lambda p: 4.0 + 1j * (p[:, 0] ** 2)
        a = fem.assemble_helmholtz(m, idx, kap).toarray()
        assert np.abs(a - a.T).max() <= 1e-14 * np.abs(a).max()

    def test_imag_sign_when_im_kappa2_nonneg(self):
        # discrete dissipation: Im{<A v, conj(v)>} <= 0 whenever Im{kappa^2} >= 0
        m = gm.disk_mesh(1.0, 4)
        idx = np.arange(m.triangles.shape[0])
        kap = lambda p: 2.0 + 1j * (1.0 + np.sin(3 * p[:, 0]) ** 2)
        a = fem.assemble_helmholtz(m, idx, kap)
        rng = np.random.default_rng(1)
        for _ in range(100):
            v = rng.standard_normal(m.n_vertices) + 1j * rng.standard_normal(m.n_vertices)
            q = np.vdot(v, a @ v)  # = <A v, conj(v)> for symmetric A
            assert q.imag <= 1e-12 * np.vdot(v, v).real

    def test_galerkin_consistency_quadrature(self):
        # v^T A u equals the quadrature evaluation of the bilinear form
        m = gm.annulus_mesh(1.0, 2.0, 2, 12)
        idx = np.arange(m.triangles.shape[0])
        kap = lambda p: 3.0 + p[:, 1]
        a = fem.assemble_helmholtz(m, idx, kap)
        rng = np.random.default_rng(2)
        u = rng.standard_normal(m.n_vertices)
        v = rng.standard_normal(m.n_vertices)
        tris, p, areas = fem._tri_geometry(m, idx)
        g = fem._grads(p, areas)
        grad_u = np.einsum("tid,ti->td", g, u[tris])
        grad_v = np.einsum("tid,ti->td", g, v[tris])
        val = np.sum(areas * np.einsum("td,td->t", grad_u, grad_v))
        pts = np.einsum("qk,tkd->tqd", fem._TRI_BARY, p)
        c = (3.0 + pts[..., 1])
        uq = np.einsum("qi,ti->tq", fem._TRI_BARY, u[tris])
        vq = np.einsum("qi,ti->tq", fem._TRI_BARY, v[tris])
        val -= np.sum(areas[:, None] * fem._TRI_W[None, :] * c * uq * vq)
        assert np.isclose(v @ (a @ u), val, rtol=1e-12)


class TestLoads:
    def test_zero_source(self):
        m = reference_triangle()
        assert np.allclose(fem.assemble_load(m, np.array([0]), 0.0), 0.0)

    def test_unit_source_single_triangle(self):
        m = reference_triangle()
        ell = fem.assemble_load(m, np.array([0]), lambda p: np.ones(len(p)))
        assert np.allclose(ell, 0.5 / 3.0)

    def test_boundary_load_linear_exact(self):
        m = reference_triangle()
        edges = np.array([[0, 1]])
        g = lambda p: 2.0 + 3.0 * p[:, 0]
        ell = fem.boundary_load(m, edges, g)
        # exact: int_0^1 (2+3x)(1-x) dx and int_0^1 (2+3x)x dx
        assert np.isclose(ell[0], 2 * 0.5 + 3 * (0.5 - 1.0 / 3.0))
        assert np.isclose(ell[1], 2 * 0.5 + 3.0 / 3.0)


class TestBoundaryMass:
    def test_single_edge(self):
        m = reference_triangle()
        mm = fem.boundary_mass(m, np.array([[0, 1]])).toarray()
        h = 1.0
        assert np.allclose(mm[:2, :2], h / 6.0 * np.array([[2, 1], [1, 2]]))

    def test_closed_circle_partition_of_unity(self):
        m = gm.disk_mesh(1.5, 6)
        chain = gm.make_chain(m, m.edges)
        mm = fem.boundary_mass(m, m.edges)
        ones = np.zeros(m.n_vertices)
        ones[chain.vertex_ids] = 1.0
        perimeter = chain.seg_lengths.sum()
        assert np.isclose(ones @ (mm @ ones), perimeter)

    def test_empty_edge_set(self):
        m = reference_triangle()
        mm = fem.boundary_mass(m, np.zeros((0, 2)))
        assert mm.nnz == 0


class TestRieszMap:
    def test_all_boundary_returns_matrix_itself(self):
        m = reference_triangle()
        g = fem.h1_gram(m, np.array([0]), 1.0)
        t = fem.discrete_h12_riesz(g, np.array([0, 1, 2]))
        assert np.allclose(t, g.toarray())

    def test_spd_on_annulus(self):
        m = gm.annulus_mesh(1.0, 2.0, 3, 14)
        g = fem.h1_gram(m, np.arange(m.triangles.shape[0]), 2.0)
        chain = gm.make_chain(m, m.edges[m.edge_tags == gm.ANNULUS_OUTER_TAG])
        t = fem.discrete_h12_riesz(g, chain.vertex_ids)
        assert np.allclose(t, t.T)
        assert np.linalg.eigvalsh(t).min() > 0

    def test_minimal_extension_against_qp_oracle(self):
        # brute-force constrained quadratic minimization on a small mesh
        m = gm.disk_mesh(1.0, 3)
        g = fem.h1_gram(m, np.arange(m.triangles.shape[0]), 1.5)
        chain = gm.make_chain(m, m.edges)
        bidx = chain.vertex_ids
        t = fem.discrete_h12_riesz(g, bidx)
        rng = np.random.default_rng(3)
        gd = g.toarray()
        n = m.n_vertices
        mask = np.zeros(n, dtype=bool)
        mask[bidx] = True
        interior = np.nonzero(~mask)[0]
        for _ in range(5):
            v = rng.standard_normal(len(bidx))
            # KKT solve for min u^T G u subject to u|_boundary = v
            u = np.zeros(n)
            u[bidx] = v
            rhs = -gd[np.ix_(interior, bidx)] @ v
            u[interior] = np.linalg.solve(gd[np.ix_(interior, interior)], rhs)
            assert np.isclose(v @ t @ v, u @ gd @ u, rtol=1e-10)


class TestElimination:
    def test_lift_matches_full_solve(self):
        m = gm.disk_mesh(1.0, 4)
        idx = np.arange(m.triangles.shape[0])
        a = fem.assemble_helmholtz(m, idx, 1.5)
        chain = gm.make_chain(m, m.edges)
        free = np.ones(m.n_vertices, dtype=bool)
        free[chain.vertex_ids] = False
        values = np.zeros(m.n_vertices, dtype=np.complex128)
        values[chain.vertex_ids] = np.exp(1j * np.arctan2(
            m.vertices[chain.vertex_ids, 1], m.vertices[chain.vertex_ids, 0]))
        rhs = fem.assemble_load(m, idx, lambda p: np.ones(len(p)) + 0j)
        a_ff, lifted = fem.eliminate_dirichlet(a, rhs, free, values)
        u_free = sp.linalg.spsolve(a_ff.tocsc(), lifted)
        u = values.copy()
        u[free] = u_free
        res = a @ u - rhs
        assert np.linalg.norm(res[free]) <= 1e-10 * np.linalg.norm(rhs)

    def test_degenerate_element_raises(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 1e-16]])
        tris = np.array([[0, 1, 2], [1, 3, 2]])
        m = gm.Mesh2D.__new__(gm.Mesh2D)
        m.vertices = verts
        m.triangles = np.array([[0, 1, 2], [0, 1, 3]])
        m.tri_tags = np.array([10, 10])
        m.edges = np.zeros((0, 2), dtype=np.int64)
        m.edge_tags = np.zeros(0, dtype=np.int64)
        with pytest.raises(fem.DegenerateElement):
            fem.assemble_stiffness(m, np.array([0, 1]))
