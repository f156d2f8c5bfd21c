"""Green's-function dynamics and the disintegration isometry operators.

The forward operator disintegrates a finite-energy disk field into a
square-integrable function on the circle-time cylinder; the backward
operator reassembles it by integrating Poisson averages along the flow.
Both are quadrature-heavy; the area integrals are organized per ring so the
angular part is handled spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson

from .chain import flow_forward, map_inverse
from .grids import trapezoid_circle
from .herglotz import poisson_integral_coeffs, poisson_integral_eval

__all__ = [
    "CylinderFunction",
    "green_eval",
    "hadamard_check",
    "iota",
    "kappa",
    "isometry_check",
]


@dataclass
class CylinderFunction:
    """Samples u(theta_j, t_k) on the circle-time cylinder."""

    times: np.ndarray      # (K,)
    values: np.ndarray     # (K, n)

    @property
    def n(self):
        return self.values.shape[1]

    def norm_squared(self, rho):
        """||u||^2 in L^2(2 rho): 2 * int int u^2 nu_t^2 dtheta dt by
        spectral angular quadrature and Simpson in time."""
        per_t = np.array([
            trapezoid_circle(self.values[k] ** 2 * rho.density_at(t))
            for k, t in enumerate(self.times)
        ])
        return 2.0 * float(simpson(per_t, x=self.times))

    def restricted(self, t_lo, t_hi):
        """Zero the samples outside [t_lo, t_hi] (hard indicator)."""
        keep = (self.times >= t_lo - 1e-12) & (self.times <= t_hi + 1e-12)
        vals = np.where(keep[:, None], self.values, 0.0)
        return CylinderFunction(self.times.copy(), vals)


def green_eval(t, z, w, rho, dt):
    """Green's function of the evolved domain at (z, w), via the disk
    formula composed with the flow; 0 once either point has exited."""
    res = flow_forward(np.array([z, w]), rho, t, dt, exact_tail_tau=False)
    if np.any(res.exited & (res.tau <= t - 1e-12)):
        return 0.0
    zt, wt = res.g
    return float(-np.log(np.abs((zt - wt) / (1.0 - np.conj(wt) * zt))))


def hadamard_check(t, z, w, rho, dt, dt_fd=1e-4):
    """Relative residual between -d/dt of the Green's function (central
    finite difference) and the Poisson-product integral against the slice
    density."""
    if green_eval(t + dt_fd, z, w, rho, dt) == 0.0:
        raise ValueError("points must stay interior through the FD stencil")
    g_plus = green_eval(t + dt_fd, z, w, rho, dt)
    g_minus = green_eval(t - dt_fd, z, w, rho, dt)
    lhs = -(g_plus - g_minus) / (2.0 * dt_fd)

    res = flow_forward(np.array([z, w]), rho, t, dt, exact_tail_tau=False)
    zt, wt = res.g
    nu2 = rho.density_at(t)
    theta = rho.grid.theta
    zeta = np.exp(1j * theta)
    pz = (1.0 - np.abs(zt) ** 2) / np.abs(zt - zeta) ** 2
    pw = (1.0 - np.abs(wt) ** 2) / np.abs(wt - zeta) ** 2
    rhs = float(trapezoid_circle(pz * pw * nu2))
    return abs(lhs - rhs) / max(abs(rhs), 1e-14), lhs, rhs


def iota(phi_laplacian, rho, times, dt, n=None, nr=96):
    """Forward disintegration of a test field given through its positive
    Laplacian: samples of

        (theta, t) -> (1/2pi) int_D Lap(phi o f_t)(z) P(z, e^{i theta}) dA(z)

    on the circle grid at the requested times. The integral is evaluated in
    the disk variable with Lap(phi o f_t) = |f_t'|^2 (Lap phi) o f_t along
    backward flows; each ring's angular integral against the Poisson kernel
    is its harmonic-extension Fourier sum, so only a smooth radial
    integral remains (Gauss-Legendre).

    phi_laplacian must evaluate the positive Laplacian -(d_xx + d_yy) phi.
    """
    n = n if n is not None else rho.grid.n
    xg, wg = leggauss(nr)
    r = 0.5 * (xg + 1.0)
    wr = 0.5 * wg
    theta = 2.0 * np.pi * np.arange(n) / n
    ring_pts = r[:, None] * np.exp(1j * theta)[None, :]

    out = np.zeros((len(times), n))
    for k, t in enumerate(times):
        if t == 0.0:
            f_vals = ring_pts
            fp_abs2 = np.ones_like(r)[:, None]
        else:
            inv = map_inverse(ring_pts.ravel(), rho, t, dt)
            f_vals = inv.f.reshape(nr, n)
            fp_abs2 = np.exp(2.0 * np.real(inv.log_fprime)).reshape(nr, n)
        F = fp_abs2 * phi_laplacian(f_vals)
        Fhat = np.fft.fft(F, axis=1) / n          # (nr, n) modes
        m = np.fft.fftfreq(n, d=1.0 / n)
        radial = Fhat * r[:, None] ** (np.abs(m)[None, :] + 1.0)
        coeffs = (radial * wr[:, None]).sum(axis=0)   # integral over r per mode
        out[k] = np.real(np.fft.ifft(coeffs * n))
    return CylinderFunction(times=np.asarray(times, dtype=float), values=out)


def kappa(u, rho, w, dt, t_max=None):
    """Backward operator: 2 pi * int_0^{tau(w)} P[u_t rho_t](g_t(w)) dt for
    each point in w, accumulated along the forward flow (trapezoid in t,
    with the exit-refined partial last step)."""
    w = np.asarray(w, dtype=complex)
    if t_max is None:
        t_max = float(u.times[-1])
    coeffs = np.array([
        poisson_integral_coeffs(u.values[k] * rho.density_at(t))
        for k, t in enumerate(u.times)
    ])
    times = u.times

    def integrand(t, y):
        if t <= times[0]:
            c = coeffs[0]
        elif t >= times[-1]:
            c = coeffs[-1]
        else:
            j = int(np.searchsorted(times, t) - 1)
            j = min(max(j, 0), len(times) - 2)
            lam = (t - times[j]) / (times[j + 1] - times[j])
            c = (1.0 - lam) * coeffs[j] + lam * coeffs[j + 1]
        return 2.0 * np.pi * poisson_integral_eval(c, y)

    res = flow_forward(w, rho, t_max, dt, extra=integrand)
    return res.extra


def isometry_check(phi, phi_laplacian, rho, dt, t_grid, test_points,
                   d_reference=None, n=None, nr=96):
    """Norm-preservation and reconstruction residuals of the two operators.

    Returns (norm_residual, reconstruction_sup_error, details): the
    relative gap between ||iota[phi]||^2 in L^2(2 rho) and the Dirichlet
    energy of phi, and the sup distance between kappa[iota[phi]] and phi on
    the test points.
    """
    u = iota(phi_laplacian, rho, t_grid, dt, n=n, nr=nr)
    norm_sq = u.norm_squared(rho)
    if d_reference is None:
        raise ValueError("supply the Dirichlet energy of the test field")
    norm_res = abs(norm_sq - d_reference) / abs(d_reference)

    recon = kappa(u, rho, test_points, dt)
    target = phi(np.asarray(test_points, dtype=complex))
    sup_err = float(np.max(np.abs(recon - target)))
    return norm_res, sup_err, {"norm_sq": norm_sq, "D": d_reference}
