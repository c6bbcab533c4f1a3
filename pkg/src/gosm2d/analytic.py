"""Closed-form reference fields: plane waves, disk scattering series, lens profile.

The disk series are truncated adaptively: modes are added until the last
term is below 1e-13 of the accumulated field at every evaluation point
(checked over a few consecutive orders to be safe near Bessel zeros).
"""

from __future__ import annotations

import numpy as np
from scipy import special as ss


class ZeroReference(Exception):
    pass


def plane_wave(kappa, theta_inc, points):
    """exp(i kappa (x cos + y sin)) evaluated at the given points."""
    points = np.asarray(points, dtype=np.float64)
    phase = points[:, 0] * np.cos(theta_inc) + points[:, 1] * np.sin(theta_inc)
    return np.exp(1j * kappa * phase)


def plane_wave_radial_derivative(kappa, theta_inc, points):
    """d/dr of the plane wave at the given points (polar radius direction)."""
    points = np.asarray(points, dtype=np.float64)
    r = np.linalg.norm(points, axis=1)
    theta = np.arctan2(points[:, 1], points[:, 0])
    return 1j * kappa * np.cos(theta - theta_inc) * plane_wave(kappa, theta_inc, points)


def _polar(points):
    points = np.asarray(points, dtype=np.float64)
    r = np.linalg.norm(points, axis=1)
    theta = np.arctan2(points[:, 1], points[:, 0])
    return r, theta


def _disk_series(kappa, points, coefficient, radial_part, start_extra=20,
                 tail_tol=1e-13, max_modes=2000):
    r, theta = _polar(points)
    out = np.zeros(len(r), dtype=np.complex128)
    quiet = 0
    p = 0
    p_min = int(np.ceil(kappa)) + start_extra
    while p < max_modes:
        coef = coefficient(p)
        term = coef * radial_part(p, r)
        if p == 0:
            out += term
        else:
            out += term * (2.0 * np.cos(p * theta))
        tail = np.max(np.abs(term) * (2.0 if p else 1.0))
        scale = max(np.max(np.abs(out)), 1e-300)
        if p >= p_min and tail <= tail_tol * scale:
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
        p += 1
    return out


def disk_dirichlet_solution(kappa, points):
    """Scattered field of a plane wave hitting a sound-soft unit disk, r >= 1."""
    h_at_1 = {}

    def coefficient(p):
        if p not in h_at_1:
            h_at_1[p] = ss.hankel1(p, kappa)
        return -(1j ** p) * ss.jv(p, kappa) / h_at_1[p]

    def radial_part(p, r):
        return ss.hankel1(p, kappa * r)

    return _disk_series(kappa, points, coefficient, radial_part)


def disk_neumann_solution(kappa, points):
    """Scattered field of a plane wave hitting a sound-hard unit disk, r >= 1."""

    def coefficient(p):
        num = p * ss.jv(p, kappa) - kappa * ss.jv(p + 1, kappa)
        den = p * ss.hankel1(p, kappa) - kappa * ss.hankel1(p + 1, kappa)
        return -(1j ** p) * num / den

    def radial_part(p, r):
        return ss.hankel1(p, kappa * r)

    return _disk_series(kappa, points, coefficient, radial_part)


def disk_neumann_radial_derivative(kappa, points):
    def coefficient(p):
        num = p * ss.jv(p, kappa) - kappa * ss.jv(p + 1, kappa)
        den = p * ss.hankel1(p, kappa) - kappa * ss.hankel1(p + 1, kappa)
        return -(1j ** p) * num / den

    def radial_part(p, r):
        kr = kappa * r
        return kappa * (p / kr * ss.hankel1(p, kr) - ss.hankel1(p + 1, kr))

    return _disk_series(kappa, points, coefficient, radial_part)


def lens_eta(points):
    """Refraction profile of the acoustic lens: 1 outside the unit disk,
    2 / (1 + r^2) inside (continuous across r = 1, value 2 at the center)."""
    r2 = np.sum(np.asarray(points, dtype=np.float64) ** 2, axis=1)
    return np.where(r2 >= 1.0, 1.0, 2.0 / (1.0 + r2))


def lens_kappa_squared(k):
    return lambda points: (k ** 2) * lens_eta(points).astype(np.complex128)


def relative_l2_error(mesh, tri_idx, u_coef, reference, quad_bary=None):
    """Element-wise 3-point quadrature of ||u_h - ref|| / ||ref|| on triangles."""
    from .fem import _TRI_BARY, _TRI_W, _tri_geometry
    bary = _TRI_BARY if quad_bary is None else quad_bary
    tris, p, areas = _tri_geometry(mesh, tri_idx)
    pts = np.einsum("qk,tkd->tqd", bary, p)
    uh = np.einsum("qi,ti->tq", bary, np.asarray(u_coef)[tris])
    if callable(reference):
        ref = np.asarray(reference(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    else:
        ref = np.einsum("qi,ti->tq", bary, np.asarray(reference)[tris])
    w = areas[:, None] * _TRI_W[None, :]
    err = np.sum(w * np.abs(uh - ref) ** 2)
    nrm = np.sum(w * np.abs(ref) ** 2)
    if nrm <= 0.0:
        raise ZeroReference("reference field vanishes on the quadrature domain")
    return float(np.sqrt(err / nrm))
