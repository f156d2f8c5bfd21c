"""Driving measure families on the circle-time cylinder.

A driving measure is a piecewise-constant-in-time family of probability
densities nu_t^2(theta) d(theta) on the circle, extended by the uniform
measure outside the covered window. Only absolutely continuous
disintegrations are representable; atomic (Dirac-type) drivers are rejected
at parse time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grids import CircleGrid, periodic_derivative, trapezoid_circle

__all__ = [
    "InvalidMeasureError",
    "DensitySegment",
    "DrivingMeasure",
    "example_density",
    "uniform_density",
    "sqrt_density",
    "local_energy",
    "total_energy",
    "time_average",
    "poisson_mollify",
    "log_slope_cylinder",
    "random_band_limited",
    "parse_measure_config",
]

MASS_TOL_PARSE = 1e-3     # mass renormalized if within this of 1, else rejected
MASS_TOL_INVARIANT = 1e-8
NEG_CLAMP = 1e-12         # FFT round-off floor for sqrt densities


class InvalidMeasureError(ValueError):
    """Density fails nonnegativity or normalization requirements."""


def uniform_density(grid):
    return np.full(grid.n, 1.0 / (2.0 * np.pi))


def example_density(grid):
    """nu^2(theta) = sin^2(theta/2)/pi, the Dirichlet-eigenfunction density."""
    return np.sin(grid.theta / 2.0) ** 2 / np.pi


def _normalize(nu2, tol=MASS_TOL_PARSE):
    nu2 = np.asarray(nu2, dtype=float)
    if np.any(nu2 < -NEG_CLAMP):
        raise InvalidMeasureError(f"density has negative sample {nu2.min():.3e}")
    nu2 = np.clip(nu2, 0.0, None)
    mass = trapezoid_circle(nu2)
    if abs(mass - 1.0) > tol:
        raise InvalidMeasureError(f"density mass {mass:.6f} not within {tol} of 1")
    return nu2 / mass


def sqrt_density(nu2):
    """Pointwise nonnegative square root, clamping tiny FFT-noise negatives."""
    nu2 = np.asarray(nu2, dtype=float)
    if np.any(nu2 < -NEG_CLAMP):
        raise InvalidMeasureError(f"density has negative sample {nu2.min():.3e}")
    return np.sqrt(np.clip(nu2, 0.0, None))


@dataclass(frozen=True)
class DensitySegment:
    """One time slab [t0, t1) carrying a fixed circle density nu^2."""

    t0: float
    t1: float
    kind: str               # "uniform", "example_sin2", or "samples"
    nu2: np.ndarray         # samples on the shared CircleGrid, mass 1

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise InvalidMeasureError(f"segment needs t1 > t0, got [{self.t0}, {self.t1}]")
        mass = trapezoid_circle(self.nu2)
        if abs(mass - 1.0) > MASS_TOL_INVARIANT:
            raise InvalidMeasureError(f"segment mass {mass} violates probability invariant")

    @property
    def is_uniform(self):
        return self.kind == "uniform"


class DrivingMeasure:
    """Ordered, gap-free density segments plus uniform extension outside."""

    def __init__(self, segments, grid):
        segments = sorted(segments, key=lambda s: s.t0)
        for a, b in zip(segments, segments[1:]):
            if abs(a.t1 - b.t0) > 1e-12:
                raise InvalidMeasureError(
                    f"segments must be contiguous: [{a.t0},{a.t1}] then [{b.t0},{b.t1}]"
                )
        self.segments = segments
        self.grid = grid
        self._uniform = uniform_density(grid)

    @property
    def t_min(self):
        return self.segments[0].t0 if self.segments else 0.0

    @property
    def t_max(self):
        return self.segments[-1].t1 if self.segments else 0.0

    def density_at(self, t):
        """nu^2 samples at time t; uniform outside the covered window."""
        for seg in self.segments:
            if seg.t0 - 1e-14 <= t < seg.t1 - 1e-14:
                return seg.nu2
        return self._uniform

    def segment_boundaries(self, a, b):
        """Sorted breakpoints of [a, b] at segment edges."""
        cuts = {a, b}
        for seg in self.segments:
            for c in (seg.t0, seg.t1):
                if a < c < b:
                    cuts.add(c)
        return sorted(cuts)

    def is_uniform_at(self, t):
        for seg in self.segments:
            if seg.t0 - 1e-14 <= t < seg.t1 - 1e-14:
                return seg.is_uniform
        return True

    def last_nonuniform_time(self):
        """End of the last non-uniform segment (t_min if all uniform)."""
        out = self.t_min
        for seg in self.segments:
            if not seg.is_uniform:
                out = max(out, seg.t1)
        return out

    def shifted(self, T):
        """Measure with disintegration s -> rho_{s+T} (domain Markov shift)."""
        segs = []
        for seg in self.segments:
            if seg.t1 <= T + 1e-14:
                continue
            segs.append(DensitySegment(max(seg.t0 - T, 0.0) if seg.t0 - T < 0 else seg.t0 - T,
                                       seg.t1 - T, seg.kind, seg.nu2))
        # clip any segment straddling T to start at 0
        segs = [DensitySegment(max(s.t0, 0.0), s.t1, s.kind, s.nu2) for s in segs]
        return DrivingMeasure(segs, self.grid)

    def truncated(self, T):
        """Measure equal to rho for t < T and uniform afterwards."""
        segs = []
        for seg in self.segments:
            if seg.t0 >= T - 1e-14:
                continue
            segs.append(DensitySegment(seg.t0, min(seg.t1, T), seg.kind, seg.nu2))
        return DrivingMeasure(segs, self.grid)


def spectral_trim(nu2, rel=1e-7):
    """Zero Fourier modes below rel * (largest mode): recovered densities
    carry broadband numerical noise that would otherwise make every later
    Herglotz sum run at full length."""
    nu2 = np.asarray(nu2, dtype=float)
    F = np.fft.fft(nu2)
    mags = np.abs(F)
    F[mags < rel * mags.max()] = 0.0
    return np.fft.ifft(F).real


def upsample_band_limited(values, m):
    """Trigonometric interpolation of circle samples to m points by FFT
    zero-padding; exact for band-limited input."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if m <= n:
        return values.copy()
    F = np.fft.fft(values)
    Fp = np.zeros(m, dtype=complex)
    Fp[: n // 2] = F[: n // 2]
    Fp[-(n // 2) + 1:] = F[-(n // 2) + 1:]
    Fp[n // 2] = 0.5 * F[n // 2]
    Fp[m - n // 2] += 0.5 * F[n // 2]
    return np.fft.ifft(Fp).real * (m / n)


def local_energy(nu2, upsample=16):
    """(1/2) * integral of nu'(theta)^2 over the circle, nu = sqrt(nu^2).

    Zero exactly when the density is uniform; +inf is unreachable here since
    atomic drivers are rejected at parse time. Densities with zeros make nu
    kink there, which costs the spectral derivative an O(1/n) bias, so the
    quadrature runs on two band-limited upsamplings of nu^2 and Richardson-
    extrapolates the 1/n term away.
    """
    nu2 = np.asarray(nu2, dtype=float)
    if np.any(nu2 < -NEG_CLAMP):
        raise InvalidMeasureError(f"density has negative sample {nu2.min():.3e}")
    n = nu2.shape[-1]

    def quad(m):
        up = upsample_band_limited(nu2, m)
        nu = np.sqrt(np.clip(up, 0.0, None))
        dnu = periodic_derivative(nu)
        return 0.5 * float(trapezoid_circle(dnu * dnu))

    m1 = max(n * upsample, 2048)
    L1, L2 = quad(m1), quad(2 * m1)
    return 2.0 * L2 - L1


def total_energy(rho, a=None, b=None):
    """Time integral of the local energy over [a, b].

    Exact for the piecewise-constant-in-time internal representation; the
    uniform extension outside the covered window contributes nothing.
    """
    if a is None:
        a = rho.t_min
    if b is None:
        b = rho.t_max
    if b < a:
        raise ValueError(f"energy window [{a}, {b}] is reversed")
    total = 0.0
    cuts = rho.segment_boundaries(a, b)
    for lo, hi in zip(cuts, cuts[1:]):
        mid = 0.5 * (lo + hi)
        if rho.is_uniform_at(mid):
            continue
        total += (hi - lo) * local_energy(rho.density_at(mid))
    return total


def time_average(rho, level, a=None, b=None):
    """Average the density over dyadic time intervals of [a, b].

    Level n splits [a, b] into 2^n slabs; on each, the output density is the
    time average of rho's density. By convexity of the local energy the
    total energy can only decrease.
    """
    if a is None:
        a = rho.t_min
    if b is None:
        b = rho.t_max
    pieces = 2 ** level
    width = (b - a) / pieces
    segs = []
    for j in range(pieces):
        lo, hi = a + j * width, a + (j + 1) * width
        cuts = rho.segment_boundaries(lo, hi)
        avg = np.zeros(rho.grid.n)
        for u, v in zip(cuts, cuts[1:]):
            avg += (v - u) * rho.density_at(0.5 * (u + v))
        avg /= (hi - lo)
        segs.append(DensitySegment(lo, hi, "samples", _normalize(avg, tol=1e-9)))
    return DrivingMeasure(segs, rho.grid)


def poisson_mollify(nu2, r, grid=None):
    """Convolve a circle density with the Poisson kernel at radius r.

    Damps the k-th Fourier mode by r^|k|; the output is strictly positive
    with the same mass, and the local energy can only decrease.
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"mollification radius must be in (0,1), got {r}")
    nu2 = np.asarray(nu2, dtype=float)
    n = nu2.shape[-1]
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    out = np.fft.ifft(np.fft.fft(nu2) * r ** k).real
    return np.clip(out, 0.0, None)


def log_slope_cylinder(rho, times):
    """Samples of u(theta, t) = -2 nu_t'(theta)/nu_t(theta) (0 where nu = 0).

    This is the cylinder function whose L^2(2 rho) norm squares to sixteen
    times the total energy; used by the isometry checks.
    """
    rows = []
    for t in times:
        nu = sqrt_density(rho.density_at(t))
        dnu = periodic_derivative(nu)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(nu > 1e-13, -2.0 * dnu / nu, 0.0)
        rows.append(u)
    return np.array(rows)


def random_band_limited(grid, rng, max_mode=3, amplitude=0.35):
    """Seeded random strictly positive density with <= max_mode Fourier modes."""
    theta = grid.theta
    nu2 = np.full(grid.n, 1.0 / (2.0 * np.pi))
    weights = rng.uniform(0.2, 1.0, size=max_mode)
    weights *= amplitude / weights.sum()
    for k in range(1, max_mode + 1):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        nu2 += weights[k - 1] / (2.0 * np.pi) * np.cos(k * theta + phase)
    return _normalize(nu2, tol=1e-6)


def _segment_from_config(entry, grid, index):
    try:
        t0, t1, kind = float(entry["t0"]), float(entry["t1"]), entry["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidMeasureError(f"segment {index}: missing or bad t0/t1/kind ({exc})")
    if kind == "uniform":
        nu2 = uniform_density(grid)
    elif kind == "example_sin2":
        nu2 = example_density(grid)
    elif kind == "samples":
        samples = entry.get("samples")
        if samples is None or len(samples) != grid.n:
            raise InvalidMeasureError(
                f"segment {index}: 'samples' must hold exactly {grid.n} values"
            )
        nu2 = _normalize(samples)
    else:
        raise InvalidMeasureError(f"segment {index}: unknown kind {kind!r}")
    return DensitySegment(t0, t1, kind, nu2)


def parse_measure_config(obj, grid=None):
    """Build a DrivingMeasure from a parsed config dict (or JSON text/path).

    The config holds an ordered list of segments, each with t0, t1 and a
    kind in {"uniform", "example_sin2", "samples"}; sample payloads are
    nu^2 values at the grid angles, renormalized when within 1e-3 of unit
    mass and rejected otherwise.
    """
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    n = int(obj.get("n", grid.n if grid is not None else 256))
    grid = grid if grid is not None and grid.n == n else CircleGrid(n)
    entries = obj.get("segments")
    if not entries:
        raise InvalidMeasureError("measure config has no segments")
    segs = [_segment_from_config(e, grid, i) for i, e in enumerate(entries)]
    return DrivingMeasure(segs, grid)
