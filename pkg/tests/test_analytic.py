import numpy as np
import pytest
from scipy import special as ss

from gosm2d import analytic
from gosm2d import mesh as gm


def circle_points(n, radius):
    theta = 2 * np.pi * np.arange(n) / n + 0.1
    return radius * np.column_stack([np.cos(theta), np.sin(theta)])


class TestPlaneWave:
    def test_origin_is_one(self):
        assert analytic.plane_wave(3.0, 0.0, np.zeros((1, 2)))[0] == pytest.approx(1.0)

    def test_unimodular(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((50, 2)) * 3
        vals = analytic.plane_wave(7.0, 4 * np.pi / 10, pts)
        assert np.allclose(np.abs(vals), 1.0)

    def test_radial_derivative_fd(self):
        pts = circle_points(8, 1.7)
        eps = 1e-6
        r = np.linalg.norm(pts, axis=1)[:, None]
        outward = pts / r
        fd = (analytic.plane_wave(5.0, 0.3, pts + eps * outward)
              - analytic.plane_wave(5.0, 0.3, pts - eps * outward)) / (2 * eps)
        got = analytic.plane_wave_radial_derivative(5.0, 0.3, pts)
        assert np.abs(got - fd).max() < 1e-6


class TestDiskSeries:
    def test_dirichlet_boundary_condition(self):
        kappa = 10.0
        pts = circle_points(64, 1.0)
        u = analytic.disk_dirichlet_solution(kappa, pts)
        ui = analytic.plane_wave(kappa, 0.0, pts)
        assert np.abs(u + ui).max() <= 1e-10

    def test_mode_zero_value_against_bessel_oracle(self):
        kappa = 3.0
        # isolate the p = 0 contribution by angular averaging at r = 2
        n = 512
        pts = circle_points(n, 2.0)
        u = analytic.disk_dirichlet_solution(kappa, pts)
        mode0 = u.mean()
        expected = -ss.jv(0, kappa) * ss.hankel1(0, 2 * kappa) / ss.hankel1(0, kappa)
        assert abs(mode0 - expected) <= 1e-12 * abs(expected)

    def test_sommerfeld_envelope_bounded(self):
        kappa = 4.0
        radii = np.linspace(5.0, 50.0, 24)
        vals = []
        for r in radii:
            pts = circle_points(16, r)
            vals.append(np.abs(analytic.disk_dirichlet_solution(kappa, pts)).max() * np.sqrt(r))
        vals = np.array(vals)
        assert vals.max() <= 3.0 * vals.min() + 1e-12

    def test_neumann_boundary_residual(self):
        kappa = 10.0
        pts = circle_points(48, 1.0)
        dun = analytic.disk_neumann_radial_derivative(kappa, pts)
        dui = analytic.plane_wave_radial_derivative(kappa, 0.0, pts)
        scale = np.abs(dui).max()
        assert np.abs(dun + dui).max() <= 1e-8 * scale

    def test_neumann_symmetry_in_theta(self):
        kappa = 20.0
        theta = np.array([0.4, -0.4])
        pts = 2.0 * np.column_stack([np.cos(theta), np.sin(theta)])
        u = analytic.disk_neumann_solution(kappa, pts)
        assert abs(u[0] - u[1]) <= 1e-10 * abs(u[0])

    def test_truncation_invariant_at_large_kappa(self):
        kappa = 20.0
        pts = circle_points(8, 2.0)
        u1 = analytic.disk_neumann_solution(kappa, pts)
        # doubling the safety margin must not change the converged series
        u2 = analytic._disk_series(
            kappa, pts,
            lambda p: -(1j ** p) * (p * ss.jv(p, kappa) - kappa * ss.jv(p + 1, kappa))
            / (p * ss.hankel1(p, kappa) - kappa * ss.hankel1(p + 1, kappa)),
            lambda p, r: ss.hankel1(p, kappa * r), start_extra=60)
        assert np.abs(u1 - u2).max() <= 1e-12 * np.abs(u1).max()


class TestLens:
    def test_profile_values(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.5, 0.0]])
        eta = analytic.lens_eta(pts)
        assert eta[0] == pytest.approx(2.0)
        assert eta[1] == pytest.approx(1.0)
        assert eta[2] == pytest.approx(1.0)
        assert eta[3] == pytest.approx(2.0 / 1.25)

    def test_kappa_squared_scaling(self):
        k = 10.0
        ksq = analytic.lens_kappa_squared(k)
        assert ksq(np.zeros((1, 2)))[0] == pytest.approx(2 * k * k)


class TestRelativeL2:
    def test_identical_fields(self):
        m = gm.disk_mesh(1.0, 3)
        u = np.cos(m.vertices[:, 0])
        assert analytic.relative_l2_error(
            m, np.arange(m.triangles.shape[0]), u, u) == pytest.approx(0.0, abs=1e-15)

    def test_scaling_by_one_percent(self):
        m = gm.disk_mesh(1.0, 4)
        u = 1.0 + m.vertices[:, 0] ** 2 + 0j
        err = analytic.relative_l2_error(
            m, np.arange(m.triangles.shape[0]), 1.01 * u, u)
        assert err == pytest.approx(0.01, rel=1e-10)

    def test_zero_reference_raises(self):
        m = gm.disk_mesh(1.0, 2)
        with pytest.raises(analytic.ZeroReference):
            analytic.relative_l2_error(m, np.arange(m.triangles.shape[0]),
                                       np.ones(m.n_vertices), np.zeros(m.n_vertices))
