"""Poisson and Herglotz integrals of circle densities.

The Herglotz integral of a time-slice density is evaluated through its
Fourier coefficients (computed once per slice), so each point evaluation is
a short Horner sum. This is the price-of-admission optimization: the flow
integrators evaluate H and H' millions of times.
"""

from __future__ import annotations

import warnings

import numpy as np

from .grids import trapezoid_circle
from .measure import sqrt_density

__all__ = [
    "poisson_kernel",
    "HerglotzEvaluator",
    "poisson_integral_coeffs",
    "poisson_integral_eval",
]

_COEFF_TRIM = 1e-13


def poisson_kernel(z, theta):
    """P(z, e^{i theta}) = (1-|z|^2)/|z - e^{i theta}|^2 for |z| < 1."""
    z = np.asarray(z)
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("poisson_kernel requires |z| < 1")
    zeta = np.exp(1j * np.asarray(theta))
    return (1.0 - np.abs(z) ** 2) / np.abs(z - zeta) ** 2


def _density_coeffs(nu2):
    """One-sided Fourier coefficients d_m = (1/2pi) int nu2 e^{-im theta}."""
    nu2 = np.asarray(nu2, dtype=float)
    n = nu2.shape[0]
    dhat = np.fft.fft(nu2) / n          # dhat[m] = (1/n) sum nu2_j e^{-2pi i j m/n}
    m_max = n // 2 - 1
    c = dhat[: m_max + 1].copy()
    # trim negligible high modes so Horner sums stay short for smooth densities
    mags = np.abs(c)
    keep = np.nonzero(mags > _COEFF_TRIM * max(mags.max(), 1e-300))[0]
    last = int(keep.max()) if keep.size else 0
    return c[: last + 1]


def _horner(coeffs, z):
    out = np.zeros_like(z, dtype=complex) + coeffs[-1]
    for c in coeffs[-2::-1]:
        out = out * z + c
    return out


class HerglotzEvaluator:
    """Herglotz integral H(z) = int (e^{it}+z)/(e^{it}-z) nu^2(t) dt of one
    time-slice density, with its z-derivative and the associated alpha field
    alpha(z) = Im(z H'(z)).

    H(z) = 2 pi (d_0 + 2 sum_{m>=1} d_m z^m) where d_m are the density's
    Fourier coefficients; truncation at n/2 modes is exact for densities
    band-limited on the grid.
    """

    def __init__(self, nu2, uniform=False):
        self.nu2 = np.asarray(nu2, dtype=float)
        self.uniform = bool(uniform)
        if self.uniform:
            self._c = np.array([1.0 / (2.0 * np.pi)], dtype=complex)
        else:
            self._c = _density_coeffs(self.nu2)
        self._mass = float(trapezoid_circle(self.nu2))

    @property
    def degree(self):
        return len(self._c) - 1

    @property
    def mass(self):
        return self._mass

    def eval(self, z):
        """H(z) for |z| <= 1; boundary evaluation relies on the density being
        smooth enough that the truncated series converges there."""
        if self.uniform:
            return np.full_like(np.asarray(z, dtype=complex), self._mass)
        z = np.asarray(z, dtype=complex)
        self._boundary_accuracy_check(z)
        c = self._c
        if len(c) == 1:
            return np.full_like(z, 2.0 * np.pi * c[0])
        tail = _horner(c[1:], z) * z
        return 2.0 * np.pi * (c[0] + 2.0 * tail)

    def deriv(self, z):
        """H'(z) by term-wise differentiation of the Fourier series."""
        if self.uniform or len(self._c) == 1:
            return np.zeros_like(np.asarray(z, dtype=complex))
        z = np.asarray(z, dtype=complex)
        self._boundary_accuracy_check(z)
        m = np.arange(1, len(self._c))
        dc = self._c[1:] * m
        return 4.0 * np.pi * _horner(dc, z)

    def alpha(self, z):
        """alpha(z) = Im(z H'(z)), the winding-rate field."""
        if self.uniform:
            return np.zeros(np.shape(z))
        z = np.asarray(z, dtype=complex)
        return np.imag(z * self.deriv(z))

    def alpha_boundary_form(self, z):
        """alpha via the boundary identity: -4 pi * P[nu nu'](z).

        Independent route used to cross-check alpha(); valid for smooth
        densities.
        """
        from .grids import periodic_derivative

        nu = sqrt_density(self.nu2)
        dnu = periodic_derivative(nu)
        return -4.0 * np.pi * poisson_integral_eval(poisson_integral_coeffs(nu * dnu), z)

    def _boundary_accuracy_check(self, z):
        if self.degree < 4:
            return
        if np.any(np.abs(z) > 1.0 - 1e-9):
            tail = np.abs(self._c[-1]) / max(np.abs(self._c).max(), 1e-300)
            if tail > 1e-10:
                warnings.warn(
                    "Herglotz series evaluated at |z|~1 with non-negligible "
                    f"trailing coefficient ({tail:.1e}); density may be too rough",
                    RuntimeWarning,
                    stacklevel=3,
                )


def poisson_integral_coeffs(samples):
    """Fourier coefficients of a real circle function for Poisson evaluation."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    dhat = np.fft.fft(samples) / n
    return dhat[: n // 2]


def poisson_integral_eval(coeffs, z):
    """Harmonic extension sum_k c_k r^|k| e^{ik phi} from one-sided coeffs."""
    z = np.asarray(z, dtype=complex)
    if len(coeffs) == 1:
        return np.full(np.shape(z), float(coeffs[0].real))
    tail = _horner(coeffs[1:], z) * z
    return coeffs[0].real + 2.0 * np.real(tail)
