"""Foliation assembly: leaves, planar winding fields, and geometric checks.

The winding field is computed everywhere as the time integral of the
winding rate alpha along trajectories of the uniformizing flow (branch-free
and defined at every grid point with a finite exit time), never by
evaluating arguments along leaves.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path

from .chain import boundary_chain, flow_forward
from .grids import PlanarField

__all__ = [
    "Leaf",
    "Foliation",
    "WindingField",
    "EvolutionError",
    "FieldAccuracyError",
    "extract_leaves",
    "winding_field",
    "whole_plane_field",
    "chord_arc_ratio",
]

FAILURE_BUDGET = 1e-3  # fraction of grid points allowed to fail integration


class EvolutionError(RuntimeError):
    """Monotone nesting of leaves failed."""


class FieldAccuracyError(RuntimeError):
    """Too many grid points failed flow integration."""


@dataclass
class Leaf:
    """One sampled leaf: closed polyline in conformal parametrization."""

    t: float
    points: np.ndarray        # complex, length n, gamma_t(theta_j)
    winding_samples: np.ndarray  # winding function on the leaf
    chord_arc: float

    def encloses_origin(self):
        ang = np.angle(np.roll(self.points, -1) / self.points)
        return abs(ang.sum() / (2.0 * np.pi) - 1.0) < 1e-6


@dataclass
class Foliation:
    leaves: list
    continuity_sup: np.ndarray = field(default_factory=lambda: np.array([]))

    def __iter__(self):
        return iter(self.leaves)


def chord_arc_ratio(points):
    """Max over sample pairs of (shorter arc length)/(chord length)."""
    p = np.asarray(points)
    n = len(p)
    seg = np.abs(np.roll(p, -1) - p)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    i, j = np.triu_indices(n, k=1)
    arc = cum[j] - cum[i]
    arc = np.minimum(arc, total - arc)
    chord = np.abs(p[j] - p[i])
    good = chord > 1e-12 * total
    return float(np.max(arc[good] / chord[good]))


def extract_leaves(rho, times, dt, n=None):
    """Sample the leaf at each requested time and verify monotone nesting.

    Nesting is checked with a point-in-polygon test on the samples; the
    sup-norm distance between consecutive leaves (in the conformal
    parametrization) is reported as a continuity diagnostic.
    """
    leaves = []
    for t in sorted(times):
        cs = boundary_chain(rho, t, dt, n=n)
        leaf = Leaf(
            t=t,
            points=cs.boundary_f,
            winding_samples=-np.imag(cs.boundary_logzfpf),
            chord_arc=chord_arc_ratio(cs.boundary_f),
        )
        if not leaf.encloses_origin():
            raise EvolutionError(f"leaf at t={t} does not enclose the origin")
        leaves.append(leaf)

    sups = []
    for prev, cur in zip(leaves, leaves[1:]):
        poly = Path(np.column_stack([prev.points.real, prev.points.imag]))
        pts = np.column_stack([cur.points.real, cur.points.imag])
        # shrink test points a hair toward centroid to dodge touching points
        centroid = pts.mean(axis=0)
        probe = pts + 1e-9 * (centroid - pts)
        if not poly.contains_points(probe).all():
            raise EvolutionError(
                f"nesting violated between t={prev.t} and t={cur.t}"
            )
        sups.append(float(np.max(np.abs(cur.points - prev.points))))
    return Foliation(leaves=leaves, continuity_sup=np.array(sups))


@dataclass
class WindingField:
    """Masked planar winding samples phi with companion exit times tau."""

    phi: PlanarField
    tau: PlanarField

    @property
    def mask(self):
        return self.phi.mask


def _flow_chunk(args):
    pts, rho, t_end, dt = args
    return flow_forward(pts, rho, t_end, dt)


def winding_field(rho, m, dt, t_max=None, box=(-1.0, 1.0, -1.0, 1.0),
                  threads=None):
    """Winding field phi(z) = int_0^{min(tau, t_max)} alpha_s(g_s(z)) ds on an
    m x m grid, with the exit-time field as companion.

    Points outside the open unit disk are masked. Grid points whose flow
    fails are masked and counted; more than 0.1% failures is an error.
    Past the last non-uniform time alpha vanishes, so t_max defaults to
    exactly that time and points still inside then keep the accumulated
    (harmonic-tail) value, with tau continued exactly through the uniform
    tail.
    """
    if t_max is None:
        t_max = rho.last_nonuniform_time()
    fld = PlanarField.square(m, box)
    Z = fld.points
    inside = np.abs(Z) < 1.0
    phi = np.full(Z.shape, np.nan)
    tau = np.full(Z.shape, np.nan)

    pts = Z[inside]
    if threads and threads > 1:
        chunks = np.array_split(pts, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                _flow_chunk, [(c, rho, t_max, dt) for c in chunks]
            ))
        wind = np.concatenate([r.winding for r in results])
        taus = np.concatenate([r.tau for r in results])
    else:
        res = flow_forward(pts, rho, t_max, dt)
        wind, taus = res.winding, res.tau

    bad = ~np.isfinite(wind)
    nbad = int(bad.sum())
    if nbad > FAILURE_BUDGET * max(pts.size, 1):
        raise FieldAccuracyError(
            f"{nbad}/{pts.size} grid points failed flow integration"
        )
    wind = np.where(bad, np.nan, wind)
    phi[inside] = wind
    tau[inside] = taus

    mask = inside & ~np.isnan(phi)
    phi_f = PlanarField(fld.x, fld.y, phi, mask)
    tau_f = PlanarField(fld.x, fld.y, tau, mask)
    return WindingField(phi=phi_f, tau=tau_f)


def whole_plane_field(rho, m, dt, box=None, threads=None):
    """Winding field of a whole-plane evolution on a grid covering an
    annulus or box around the covered window.

    The chain is uniform (pure scaling) before the window start T_min, so
    the whole-plane field is an exact rescaling of the disk field of the
    shifted measure: phi(z) = phi_shift(e^{T_min} z). Points beyond the
    uniform-head region carry phi = 0 and tau = -log|z| exactly.
    """
    t_min = rho.t_min
    for seg in rho.segments:
        if not seg.is_uniform and seg.t0 < t_min - 1e-14:
            raise ValueError("measure must be uniform before its covered window")
    shifted = rho.shifted(t_min)
    scale = np.exp(t_min)        # maps whole-plane z to disk-chart zeta
    outer = np.exp(-t_min)
    if box is None:
        box = (-1.2 * outer, 1.2 * outer, -1.2 * outer, 1.2 * outer)

    fld = PlanarField.square(m, box)
    Z = fld.points
    zeta = scale * Z
    in_chart = (np.abs(zeta) < 1.0) & (np.abs(Z) > 0)
    beyond = np.abs(zeta) >= 1.0

    phi = np.full(Z.shape, np.nan)
    tau = np.full(Z.shape, np.nan)
    phi[beyond] = 0.0
    with np.errstate(divide="ignore"):
        tau[beyond] = -np.log(np.abs(Z[beyond]))

    pts = zeta[in_chart]
    res = flow_forward(pts, shifted, shifted.last_nonuniform_time(), dt)
    bad = ~np.isfinite(res.winding)
    if bad.sum() > FAILURE_BUDGET * max(pts.size, 1):
        raise FieldAccuracyError("too many failed points in whole-plane field")
    phi[in_chart] = np.where(bad, np.nan, res.winding)
    tau[in_chart] = res.tau + t_min   # shift disk-chart time back

    mask = ~np.isnan(phi)
    return WindingField(
        phi=PlanarField(fld.x, fld.y, phi, mask),
        tau=PlanarField(fld.x, fld.y, tau, mask),
    )
