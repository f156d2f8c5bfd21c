"""Closed-form conformal maps used by the curve-energy and transformation
pipelines: disk automorphisms, normalized maps onto disks, and the
tangent-circle chain of the eigenfunction-density evolution.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "disk_automorphism",
    "disk_automorphism_inverse",
    "normalized_map_to_disk",
    "example_chain_map",
    "example_leaf_circle",
    "example_tau",
    "circle_through",
    "fit_circle",
    "invert_circle",
]


def disk_automorphism(a, phi=0.0):
    """m(z) = e^{i phi} (z + a)/(1 + conj(a) z): unit-disk automorphism with
    m(0) = e^{i phi} a. Returns (m, m')."""
    a = complex(a)

    def m(z):
        return np.exp(1j * phi) * (z + a) / (1.0 + np.conj(a) * z)

    def mp(z):
        return np.exp(1j * phi) * (1.0 - abs(a) ** 2) / (1.0 + np.conj(a) * z) ** 2

    return m, mp


def disk_automorphism_inverse(a, phi=0.0):
    """Inverse of disk_automorphism(a, phi)."""

    def minv(w):
        u = np.exp(-1j * phi) * np.asarray(w, dtype=complex)
        return (u - a) / (1.0 - np.conj(a) * u)

    return minv


def normalized_map_to_disk(center, radius):
    """The conformal map f: D -> D(center, radius) with f(0) = 0, f'(0) > 0.

    Requires |center| < radius (the target disk must contain the origin).
    f(z) = C + R (z - c)/(1 - conj(c) z) with c = C/R; the derivative at the
    origin equals the conformal radius (R^2 - |C|^2)/R.

    Returns (f, fprime, fprime0).
    """
    C = complex(center)
    R = float(radius)
    if abs(C) >= R:
        raise ValueError("target disk must contain the origin")
    c = C / R

    def f(z):
        z = np.asarray(z, dtype=complex)
        return C + R * (z - c) / (1.0 - np.conj(c) * z)

    def fp(z):
        z = np.asarray(z, dtype=complex)
        return R * (1.0 - abs(c) ** 2) / (1.0 - np.conj(c) * z) ** 2

    fp0 = (R * R - abs(C) ** 2) / R
    return f, fp, fp0


def example_chain_map(t):
    """Closed-form chain map f_t(z) = e^{-t} z / (1 - (1-e^{-t}) z) of the
    evolution driven by the eigenfunction density. Returns (f, fprime)."""
    u = np.exp(-t)
    b = 1.0 - u

    def f(z):
        z = np.asarray(z, dtype=complex)
        return u * z / (1.0 - b * z)

    def fp(z):
        z = np.asarray(z, dtype=complex)
        return u / (1.0 - b * z) ** 2

    return f, fp


def example_leaf_circle(t):
    """Center and radius of the leaf at time t for the eigenfunction-density
    evolution: the circle of radius 1/(2-e^{-t}) centered at
    (1-e^{-t})/(2-e^{-t}), internally tangent to the unit circle at 1."""
    u = np.exp(-t)
    q = 2.0 - u
    return (1.0 - u) / q, 1.0 / q


def circle_through(z1, z2, z3):
    """Center and radius of the circle through three complex points."""
    x1, y1, x2, y2, x3, y3 = z1.real, z1.imag, z2.real, z2.imag, z3.real, z3.imag
    d = 2.0 * (x1 * (y2 - y3) + x2 * (y3 - y1) + x3 * (y1 - y2))
    if abs(d) < 1e-300:
        raise ValueError("collinear points")
    s1, s2, s3 = abs(z1) ** 2, abs(z2) ** 2, abs(z3) ** 2
    ux = (s1 * (y2 - y3) + s2 * (y3 - y1) + s3 * (y1 - y2)) / d
    uy = (s1 * (x3 - x2) + s2 * (x1 - x3) + s3 * (x2 - x1)) / d
    center = ux + 1j * uy
    return center, abs(z1 - center)


def fit_circle(points):
    """Least-squares circle fit (Kasa). Returns (center, radius, max_dev)."""
    z = np.asarray(points)
    x, y = z.real, z.imag
    A = np.column_stack([2.0 * x, 2.0 * y, np.ones_like(x)])
    b = x * x + y * y
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    cx, cy, c0 = sol
    center = cx + 1j * cy
    radius = np.sqrt(c0 + cx * cx + cy * cy)
    dev = np.abs(np.abs(z - center) - radius).max()
    return center, float(radius), float(dev)


def invert_circle(center, radius):
    """Image of the circle |z - center| = radius under z -> 1/z, assuming the
    circle encloses the origin. Returns (center, radius) of the image."""
    c, r = complex(center), float(radius)
    d = abs(c) ** 2 - r * r
    if d >= 0:
        raise ValueError("circle must enclose the origin")
    return np.conj(c) / d, r / abs(d)


def example_tau(z, t_cap=np.inf):
    """Exit time of z under the eigenfunction-density evolution (capped).

    Solves |z (2-u) - (1-u)| = 1 for u = e^{-tau} on the leaf through z;
    points inside the leaf disk at t_cap get tau > t_cap (returned as the
    exact solution, which may exceed the cap).
    """
    z = np.asarray(z, dtype=complex)
    A = np.abs(z - 1.0) ** 2
    B = -2.0 * np.real((2.0 * z - 1.0) * np.conj(z - 1.0))
    C = np.abs(2.0 * z - 1.0) ** 2 - 1.0
    disc = np.maximum(B * B - 4.0 * A * C, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        u1 = (-B + np.sqrt(disc)) / (2.0 * A)
        u2 = (-B - np.sqrt(disc)) / (2.0 * A)
    u = np.where((u1 > 0) & (u1 <= 1.0 + 1e-12), u1, u2)
    u = np.clip(u, np.exp(-t_cap) if np.isfinite(t_cap) else 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return -np.log(u)
