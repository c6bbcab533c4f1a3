import numpy as np
import pytest

from gosm2d import bem
from gosm2d import mesh as gm


def circle_chain(n, radius=1.0):
    theta = 2 * np.pi * np.arange(n) / n
    pts = radius * np.column_stack([np.cos(theta), np.sin(theta)])
    return gm.Chain(np.arange(n), pts)


# -- independent special-function oracles (power/ascending series) ---------

def j0_series(x, terms=40):
    out, term = 0.0, 1.0
    for m in range(terms):
        out += term
        term *= -(x * x / 4.0) / ((m + 1) ** 2)
    return out


def y0_series(x, terms=40):
    gamma = 0.5772156649015328606
    s, term, h = 0.0, 1.0, 0.0
    for m in range(1, terms):
        term *= -(x * x / 4.0) / (m * m)
        h += 1.0 / m
        s += -term * h
    return (2.0 / np.pi) * ((np.log(x / 2.0) + gamma) * j0_series(x) + s)


class TestSpecialFunctions:
    def test_j0_at_zero(self):
        assert bem.bessel_j(0, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_h1_0_at_one_vs_series_oracle(self):
        expected = j0_series(1.0) + 1j * y0_series(1.0)
        got = bem.hankel_h1(0, 1.0)
        assert abs(got - expected) <= 1e-12 * abs(expected)

    @pytest.mark.parametrize("x", [0.5, 1.0, 5.0, 20.0])
    def test_wronskian_identity(self, x):
        lhs = (bem.bessel_j(0, x) * bem.bessel_y(1, x)
               - bem.bessel_j(1, x) * bem.bessel_y(0, x))
        assert abs(lhs + 2.0 / (np.pi * x)) <= 1e-12

    def test_domain_errors(self):
        with pytest.raises(bem.DomainError):
            bem.hankel_h1(0, 0.0)
        with pytest.raises(bem.DomainError):
            bem.bessel_k0_k1(-1.0)

    def test_k0_k1_positive_decaying(self):
        k0a, k1a = bem.bessel_k0_k1(1.0)
        k0b, k1b = bem.bessel_k0_k1(2.0)
        assert k0a > k0b > 0 and k1a > k1b > 0


class TestKernel:
    def test_helmholtz_log_remainder_small_r_limit(self):
        ker = bem.Kernel2D("helmholtz", 3.0)
        lim = 0.25j - (np.log(1.5) + 0.5772156649015329) / (2 * np.pi)
        vals = ker.log_remainder(np.array([1e-200, 1e-10, 1e-6]))
        assert abs(vals[0] - lim) < 1e-14
        assert abs(vals[1] - lim) < 1e-9

    def test_yukawa_value_real_positive(self):
        ker = bem.Kernel2D("yukawa", 2.0)
        v = ker.value(np.array([0.1, 1.0, 3.0]))
        assert np.all(np.abs(v.imag) == 0) if np.iscomplexobj(v) else True
        assert np.all(np.asarray(v, dtype=float) > 0)
        assert v[0] > v[1] > v[2]

    def test_maue_coefficient_signs(self):
        assert bem.Kernel2D("helmholtz", 2.0).maue_k2 == pytest.approx(4.0)
        assert bem.Kernel2D("yukawa", 2.0).maue_k2 == pytest.approx(-4.0)


class TestLogMomentConstants:
    def test_against_adaptive_quadrature(self):
        from scipy.integrate import dblquad
        for (a, b), expected in np.ndenumerate(bem._LOG_D):
            def f(t, s, a=a, b=b):
                base = np.log(abs(s - t)) if s != t else 0.0
                ps = (1 - s) if a == 0 else s
                pt = (1 - t) if b == 0 else t
                return base * ps * pt
            val, _ = dblquad(f, 0, 1, 0, 1, epsabs=1e-12)
            assert val == pytest.approx(expected, abs=1e-9)


class TestAssembly:
    def test_symmetry_and_transpose_relation(self):
        chain = circle_chain(40)
        bios = bem.assemble_bios(chain, bem.Kernel2D("helmholtz", 2.0))
        for mat in (bios.v, bios.w):
            assert np.abs(mat - mat.T).max() <= 1e-12 * np.abs(mat).max()
        # the adjoint-double-layer block is minus the transpose of the
        # double-layer block under the conjugation-free pairing
        assert np.abs(bios.kp + bios.k.T).max() <= 1e-10 * max(np.abs(bios.k).max(), 1e-30)

    def test_single_layer_circle_symbol(self):
        # V e^{i n theta} = (i pi / 2) J_n(k) H_n(k) e^{i n theta} on the unit
        # circle; the Galerkin Rayleigh quotient converges at O(h^2)
        k = 2.0
        errs = []
        for n_panels in (32, 64, 128):
            chain = circle_chain(n_panels)
            bios = bem.assemble_bios(chain, bem.Kernel2D("helmholtz", k))
            theta = 2 * np.pi * np.arange(n_panels) / n_panels
            err = 0.0
            for mode in (0, 1, 3):
                e = np.exp(1j * mode * theta)
                lam = np.vdot(e, bios.v @ e) / np.vdot(e, bios.mass @ e)
                exact = 0.5j * np.pi * bem.bessel_j(mode, k) * bem.hankel_h1(0, k) \
                    if mode == 0 else \
                    0.5j * np.pi * bem.bessel_j(mode, k) * (
                        sspecial_hankel(mode, k))
                err = max(err, abs(lam - exact))
            errs.append(err)
        assert errs[1] < 0.4 * errs[0]
        assert errs[2] < 0.4 * errs[1]

    def test_im_v_nonnegative_helmholtz(self):
        chain = circle_chain(48, radius=1.3)
        bios = bem.assemble_bios(chain, bem.Kernel2D("helmholtz", 3.0))
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = rng.standard_normal(48) + 1j * rng.standard_normal(48)
            q = np.vdot(p, bios.v @ p)
            assert q.imag >= -1e-12 * np.vdot(p, p).real

    def test_yukawa_real_and_spd(self):
        chain = circle_chain(40, radius=0.8)
        bios = bem.assemble_bios(chain, bem.Kernel2D("yukawa", 2.5))
        for mat in (bios.v, bios.w):
            assert np.abs(mat.imag).max() <= 1e-14 * np.abs(mat.real).max()
        eig_w = np.linalg.eigvalsh(bios.w.real)
        assert eig_w.min() > 0
        rng = np.random.default_rng(1)
        phi = rng.standard_normal(40)
        assert phi @ bios.w.real @ phi > 0

    def test_orientation_error(self):
        chain = circle_chain(16).reversed()
        with pytest.raises(bem.OrientationError):
            bem.assemble_bios(chain, bem.Kernel2D("helmholtz", 1.0))

    @pytest.mark.parametrize("kind,k", [("helmholtz", 2.0), ("yukawa", 2.0)])
    def test_calderon_residual_decreases(self, kind, k):
        res = []
        for n in (24, 48, 96):
            bios = bem.assemble_bios(circle_chain(n), bem.Kernel2D(kind, k))
            res.append(bem.calderon_residual(bios))
        assert res[1] < res[0]
        assert res[2] < res[1]

    def test_calderon_p_itself_is_order_one(self):
        bios = bem.assemble_bios(circle_chain(48), bem.Kernel2D("helmholtz", 2.0))
        minv = np.linalg.inv(bios.mass)
        p = 0.5 * np.eye(96) + np.vstack([
            np.hstack([minv @ bios.k, minv @ bios.v]),
            np.hstack([minv @ bios.w, minv @ bios.kp])])
        assert np.linalg.norm(p, 2) / np.linalg.norm(p - np.eye(96), 2) > 0.1


def sspecial_hankel(order, x):
    from scipy.special import hankel1
    return hankel1(order, x)


class TestLayerPotential:
    def test_against_fine_quadrature_oracle(self):
        chain = circle_chain(32)
        ker = bem.Kernel2D("helmholtz", 2.0)
        rng = np.random.default_rng(2)
        v = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        p = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        pts = np.array([[3.0, 0.5], [0.1, 4.0], [-2.5, -2.5]])
        coarse = bem.layer_potential(chain, ker, v, p, pts, n_gauss=12)
        fine = bem.layer_potential(chain, ker, v, p, pts, n_gauss=48)
        assert np.abs(coarse - fine).max() <= 1e-8 * max(np.abs(fine).max(), 1e-30)

    def test_reproduces_radiating_point_source_field(self):
        # exterior field of a source inside the circle is reproduced by its
        # own Cauchy traces through the representation u = D(dir) + S(-neu)
        k = 2.0
        src = np.array([0.3, -0.1])
        ker = bem.Kernel2D("helmholtz", k)

        def field(pts):
            r = np.linalg.norm(pts - src, axis=1)
            return 0.25j * sspecial_hankel(0, k * r)

        def dfield(pts, normals):
            d = pts - src
            r = np.linalg.norm(d, axis=1)
            return -0.25j * k * sspecial_hankel(1, k * r) * \
                np.einsum("id,id->i", normals, d) / r

        errs = []
        for n in (64, 128):
            chain = circle_chain(n)
            vtx_normals = chain.points / np.linalg.norm(chain.points, axis=1)[:, None]
            dirichlet = field(chain.points)
            neumann = dfield(chain.points, vtx_normals)
            pts = np.array([[2.5, 1.0], [-3.0, 0.4]])
            got = bem.layer_potential(chain, ker, dirichlet, -neumann, pts, n_gauss=16)
            errs.append(np.abs(got - field(pts)).max())
        assert errs[1] < 0.35 * errs[0]
        assert errs[0] < 1e-2
