"""Shared grids, circle quadrature, spectral differentiation, RK4 stepping,
and masked planar fields.

Everything here is a pure function of its inputs; the rest of the package
builds on these primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CircleGrid",
    "TimeGrid",
    "PlanarField",
    "periodic_derivative",
    "trapezoid_circle",
    "rk4_step",
    "masked_gradient",
    "dirichlet_energy",
    "ConfigurationError",
    "DegenerateDomainError",
]


class ConfigurationError(ValueError):
    """Raised for invalid grid or run configuration."""


class DegenerateDomainError(ValueError):
    """Raised when a masked field has too few valid points to integrate."""


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CircleGrid:
    """Equispaced angles theta_j = 2*pi*j/n on [0, 2*pi).

    n must be a power of two (>= 16) so FFT differentiation is available.
    """

    n: int

    def __post_init__(self):
        if self.n < 16 or not _is_power_of_two(self.n):
            raise ConfigurationError(
                f"circle grid size must be a power of two >= 16, got {self.n}"
            )

    @property
    def theta(self):
        return 2.0 * np.pi * np.arange(self.n) / self.n

    @property
    def nodes(self):
        """Unit-circle nodes e^{i theta_j}."""
        return np.exp(1j * self.theta)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time nodes t_k = t0 + k*dt covering [t0, t1]."""

    t0: float
    t1: float
    dt: float
    steps: int = field(init=False)

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ConfigurationError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        ratio = (self.t1 - self.t0) / self.dt
        steps = int(round(ratio))
        if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
            raise ConfigurationError(
                f"(t1-t0)/dt = {ratio} is not an integer number of steps"
            )
        object.__setattr__(self, "steps", steps)

    @property
    def nodes(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)


def periodic_derivative(values):
    """Spectral d/dtheta of samples on a CircleGrid.

    Exact for trigonometric polynomials of degree < n/2. Real input gives
    real output.
    """
    values = np.asarray(values)
    n = values.shape[-1]
    if not _is_power_of_two(n):
        raise ConfigurationError(f"periodic_derivative needs power-of-two length, got {n}")
    k = np.fft.fftfreq(n, d=1.0 / n)
    k[n // 2] = 0.0  # zero the unmatched Nyquist mode
    out = np.fft.ifft(1j * k * np.fft.fft(values))
    if np.isrealobj(values):
        return out.real
    return out


def trapezoid_circle(values):
    """(2*pi/n) * sum(values): the trapezoid rule on the periodic circle.

    Spectrally accurate for smooth periodic integrands.
    """
    values = np.asarray(values)
    return (2.0 * np.pi / values.shape[-1]) * values.sum(axis=-1)


def rk4_step(state, t, dt, rhs):
    """One classical fourth-order Runge-Kutta step of y' = rhs(t, y).

    state may be any complex/real ndarray; rhs must map (t, y) -> dy/dt of
    the same shape. Local error O(dt^5) for smooth rhs.
    """
    k1 = rhs(t, state)
    k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2)
    k4 = rhs(t + dt, state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class PlanarField:
    """Real scalar samples on a uniform m x m grid with a validity mask.

    values at masked-out points are ignored (stored as NaN); spacing is
    uniform and equal in both axes.
    """

    x: np.ndarray          # (m,) grid abscissas
    y: np.ndarray          # (m,) grid ordinates
    values: np.ndarray     # (m, m) real, NaN where invalid
    mask: np.ndarray       # (m, m) bool, True where valid

    def __post_init__(self):
        hx = self.x[1] - self.x[0]
        hy = self.y[1] - self.y[0]
        if abs(hx - hy) > 1e-12 * max(abs(hx), abs(hy)):
            raise ConfigurationError("planar grid spacing must be equal in both axes")
        self.values = np.where(self.mask, self.values, np.nan)

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    @property
    def points(self):
        """Complex sample points x + i y, shape (m, m), indexing 'ij'."""
        return self.x[:, None] + 1j * self.y[None, :]

    @staticmethod
    def square(m, box=(-1.0, 1.0, -1.0, 1.0)):
        """Empty field (all masked) on an m x m grid over the given box."""
        x = np.linspace(box[0], box[1], m)
        y = np.linspace(box[2], box[3], m)
        vals = np.full((m, m), np.nan)
        mask = np.zeros((m, m), dtype=bool)
        return PlanarField(x, y, vals, mask)


def masked_gradient(values, mask, h):
    """Gradient of masked samples: central differences in the interior,
    one-sided at the mask boundary, NaN where no stencil exists.

    Returns (gx, gy, stencil_ok) where stencil_ok flags points with a
    usable gradient in both directions.
    """
    v = np.where(mask, values, np.nan)
    P = np.pad(v, 1, constant_values=np.nan)
    V = np.pad(mask, 1, constant_values=False)

    c = P[1:-1, 1:-1]
    xp, xm = P[2:, 1:-1], P[:-2, 1:-1]
    vp, vm = V[2:, 1:-1], V[:-2, 1:-1]
    gx = np.where(
        vp & vm, (xp - xm) / (2.0 * h),
        np.where(vp & mask, (xp - c) / h, np.where(vm & mask, (c - xm) / h, np.nan)),
    )
    yp, ym = P[1:-1, 2:], P[1:-1, :-2]
    wp, wm = V[1:-1, 2:], V[1:-1, :-2]
    gy = np.where(
        wp & wm, (yp - ym) / (2.0 * h),
        np.where(wp & mask, (yp - c) / h, np.where(wm & mask, (c - ym) / h, np.nan)),
    )
    ok = mask & ~np.isnan(gx) & ~np.isnan(gy)
    return gx, gy, ok


def dirichlet_energy(fld, return_diagnostics=False):
    """(1/pi) * integral of |grad(field)|^2 over the valid region.

    Central differences in the interior, one-sided differences at the mask
    boundary; cells with no usable stencil are excluded and their total area
    is reported as a diagnostic. Adding a constant to the field leaves the
    result unchanged by construction.
    """
    if int(fld.mask.sum()) < 9:
        raise DegenerateDomainError("fewer than 3x3 valid points in planar field")
    h = fld.h
    gx, gy, ok = masked_gradient(fld.values, fld.mask, h)
    g2 = np.where(ok, gx * gx + gy * gy, 0.0)
    energy = float(g2.sum() * h * h / np.pi)
    if return_diagnostics:
        excluded = fld.mask & ~ok
        diag = {
            "excluded_cells": int(excluded.sum()),
            "excluded_area": float(excluded.sum() * h * h),
            "valid_area": float(ok.sum() * h * h),
        }
        return energy, diag
    return energy
