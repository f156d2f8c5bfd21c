"""Conformal distortion of foliations and inversion/time-reversal.

Distortion: a germ psi (conformal, univalent on the closed disk, checked)
is applied to the evolving hulls; the image family is re-uniformized and
its driving densities recovered, giving the data of the Schwarzian
transformation law. For a germ univalent on the whole closed disk the
per-time conjugated maps are Moebius, so the Schwarzian term is exactly
zero and the law reduces to the mass term; this covers every supported
germ kind.

Reversal: each leaf is inverted through z -> 1/z, the inverted interior
domains are re-uniformized (their leaves must be circles, which holds for
the supported measures whose leaves are Moebius images of circles), and
the reversed driving measure is recovered on the new capacity time grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from . import maps
from .chain import ChainSample, boundary_chain, flow_forward, map_inverse, measure_recovery
from .grids import trapezoid_circle
from .measure import (DensitySegment, DrivingMeasure, local_energy,
                      spectral_trim, total_energy)

__all__ = [
    "AnalyticGerm",
    "IdentityGerm",
    "RotationGerm",
    "DiskMobiusGerm",
    "PolynomialGerm",
    "schwarzian",
    "DistortionData",
    "distort_measure",
    "distortion_identity",
    "ReversedChain",
    "reverse_foliation",
    "leaf_circles",
]

CIRCLE_FIT_TOL = 1e-4


# ------------------------------------------------------------------ germs

class AnalyticGerm:
    """Conformal germ with evaluators for psi and its first three
    derivatives; must be injective on its declared annulus (argument
    principle spot check) and univalent on the closed disk."""

    def psi(self, z):
        raise NotImplementedError

    def dpsi(self, z):
        raise NotImplementedError

    def d2psi(self, z):
        raise NotImplementedError

    def d3psi(self, z):
        raise NotImplementedError

    def inverse_at_zero(self):
        """psi^{-1}(0) by Newton from the origin."""
        z = 0.0 + 0.0j
        for _ in range(60):
            step = self.psi(z) / self.dpsi(z)
            z = z - step
            if abs(step) < 1e-15:
                break
        if abs(self.psi(z)) > 1e-12 or abs(z) >= 1.0:
            raise ValueError("germ has no zero preimage inside the disk")
        return complex(z)

    def check_univalent(self, n_samples=720, radius=1.0):
        """Argument-principle sampling: psi restricted to |z| = radius must
        wind exactly once around interior image samples, and psi' must not
        vanish on the closed disk samples."""
        theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
        ring = radius * np.exp(1j * theta)
        rr = np.linspace(0.0, radius, 40)[1:]
        disk_pts = (rr[:, None] * np.exp(1j * theta[None, ::12])).ravel()
        if np.any(np.abs(self.dpsi(disk_pts)) < 1e-12):
            raise ValueError("germ derivative vanishes inside the disk")
        boundary = self.psi(ring)
        for probe in (self.psi(0.3 + 0.1j), self.psi(-0.4j)):
            ang = np.angle(np.roll(boundary - probe, -1) / (boundary - probe))
            wind = ang.sum() / (2.0 * np.pi)
            if abs(wind - 1.0) > 1e-6:
                raise ValueError("germ is not univalent on the disk")
        return True


class IdentityGerm(AnalyticGerm):
    def psi(self, z):
        return np.asarray(z, dtype=complex)

    def dpsi(self, z):
        return np.ones(np.shape(z), dtype=complex)

    def d2psi(self, z):
        return np.zeros(np.shape(z), dtype=complex)

    def d3psi(self, z):
        return np.zeros(np.shape(z), dtype=complex)


class RotationGerm(AnalyticGerm):
    def __init__(self, alpha):
        self.alpha = float(alpha)

    def psi(self, z):
        return np.exp(1j * self.alpha) * np.asarray(z, dtype=complex)

    def dpsi(self, z):
        return np.full(np.shape(z), np.exp(1j * self.alpha), dtype=complex)

    def d2psi(self, z):
        return np.zeros(np.shape(z), dtype=complex)

    def d3psi(self, z):
        return np.zeros(np.shape(z), dtype=complex)


class DiskMobiusGerm(AnalyticGerm):
    """psi(z) = e^{i phi} (z + a)/(1 + conj(a) z), |a| < 1."""

    def __init__(self, a, rotation=0.0):
        if abs(a) >= 1.0:
            raise ValueError("Moebius parameter must satisfy |a| < 1")
        self.a = complex(a)
        self.rotation = float(rotation)

    def psi(self, z):
        z = np.asarray(z, dtype=complex)
        return np.exp(1j * self.rotation) * (z + self.a) / (1.0 + np.conj(self.a) * z)

    def dpsi(self, z):
        z = np.asarray(z, dtype=complex)
        num = np.exp(1j * self.rotation) * (1.0 - abs(self.a) ** 2)
        return num / (1.0 + np.conj(self.a) * z) ** 2

    def d2psi(self, z):
        z = np.asarray(z, dtype=complex)
        num = np.exp(1j * self.rotation) * (1.0 - abs(self.a) ** 2)
        return -2.0 * np.conj(self.a) * num / (1.0 + np.conj(self.a) * z) ** 3

    def d3psi(self, z):
        z = np.asarray(z, dtype=complex)
        num = np.exp(1j * self.rotation) * (1.0 - abs(self.a) ** 2)
        return 6.0 * np.conj(self.a) ** 2 * num / (1.0 + np.conj(self.a) * z) ** 4


class PolynomialGerm(AnalyticGerm):
    """psi(z) = z + sum_k c_k z^k for k >= 2, small enough to be univalent
    on the closed disk (sum k |c_k| < 1 is enforced)."""

    def __init__(self, coeffs):
        # coeffs: mapping degree -> coefficient, degrees >= 2
        self.coeffs = {int(k): complex(v) for k, v in dict(coeffs).items()}
        if any(k < 2 for k in self.coeffs):
            raise ValueError("perturbation degrees must be >= 2")
        if sum(k * abs(c) for k, c in self.coeffs.items()) >= 1.0:
            raise ValueError("coefficients too large for disk univalence")

    def psi(self, z):
        z = np.asarray(z, dtype=complex)
        out = z.astype(complex).copy()
        for k, c in self.coeffs.items():
            out = out + c * z ** k
        return out

    def dpsi(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for k, c in self.coeffs.items():
            out = out + k * c * z ** (k - 1)
        return out

    def d2psi(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for k, c in self.coeffs.items():
            out = out + k * (k - 1) * c * z ** (k - 2)
        return out

    def d3psi(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for k, c in self.coeffs.items():
            if k >= 3:
                out = out + k * (k - 1) * (k - 2) * c * z ** (k - 3)
        return out


def schwarzian(germ, z):
    """S psi = psi'''/psi' - (3/2)(psi''/psi')^2 from the germ evaluators."""
    z = np.asarray(z, dtype=complex)
    p1 = germ.dpsi(z)
    if np.any(np.abs(p1) < 1e-14):
        raise ZeroDivisionError("psi' vanishes at an evaluation point")
    ratio = germ.d2psi(z) / p1
    return germ.d3psi(z) / p1 - 1.5 * ratio ** 2


# ------------------------------------------------------------- distortion

@dataclass
class DistortionData:
    times: np.ndarray
    densities: np.ndarray       # recovered image densities (not normalized)
    masses: np.ndarray          # |rho~_t| by direct quadrature
    masses_change_of_var: np.ndarray   # int |psi_t'| nu^2 dtheta cross-check
    psi_t_germs: list           # per-time conjugated maps (Moebius)
    schwarzian_boundary: np.ndarray    # e^{2 i theta} S psi_t(e^{i theta})
    capacity_gain: float        # log g~'(0) increment over the time window


def distort_measure(rho, germ, dt, nt=21, n=None, eps=1e-4, ds_rec=5e-4):
    """Distort the evolution on [0, 1] by the germ and recover the image
    driving densities.

    For each sample time the image chain is re-uniformized: since the germ
    is univalent on the closed disk (checked), the normalized Riemann map
    of the image domain is psi o f_t o m_t with a Moebius correction m_t
    pinned by the flow of psi^{-1}(0). The image densities come out of
    measure_recovery applied to ring samples of that chain, so no appeal is
    made to the transformation law being tested. Sample times keep one
    recovery stencil clear of the window ends, where the original density
    jumps.
    """
    germ.check_univalent()
    n = n if n is not None else rho.grid.n
    a0 = germ.inverse_at_zero()
    psi_p_a0 = complex(germ.dpsi(np.array([a0]))[0])
    times = np.linspace(2.0 * ds_rec, 1.0 - 2.0 * ds_rec, nt)

    theta = 2.0 * np.pi * np.arange(n) / n
    nodes = np.exp(1j * theta)
    r1, r2 = 1.0 - eps, 1.0 - 2.0 * eps

    def flow_a0(t):
        if t <= 0.0:
            return a0 * np.exp(t), np.exp(-t) + 0.0j
        return _flow_point(a0, rho, t, dt)

    def correction(t):
        w_t, fpw = flow_a0(t)
        phi_t = float(-np.angle(psi_p_a0 * fpw))
        return w_t, phi_t

    def image_sample(t):
        w_t, phi_t = correction(t)
        m, _ = maps.disk_automorphism(np.exp(-1j * phi_t) * w_t, phi_t)
        ring_in = np.concatenate([m(r1 * nodes), m(r2 * nodes)])
        f_ring = np.exp(-t) * ring_in if t <= 0.0 else map_inverse(ring_in, rho, t, dt).f
        img = germ.psi(f_ring).reshape(2, n)
        return ChainSample(
            t=t, boundary_f=2.0 * img[0] - img[1],
            boundary_logzfpf=np.zeros(n, dtype=complex),
            ring_radii=(r1, r2), ring_f=img,
        )

    def psi_t_of(t):
        w_t, phi_t = correction(t)
        if abs(w_t) < 1e-15 and abs(phi_t) < 1e-15:
            return IdentityGerm()
        return DiskMobiusGerm(-w_t, rotation=-phi_t)   # exact inverse of m_t

    densities, masses, masses_cv, psis, schw = [], [], [], [], []
    for t in times:
        nu2, mass = measure_recovery(
            image_sample(t - ds_rec), image_sample(t), image_sample(t + ds_rec),
            normalize=False,
        )
        psi_t = psi_t_of(t)
        densities.append(nu2)
        masses.append(mass)
        psis.append(psi_t)
        # change-of-variables mass: int nu~^2 dtheta = int |psi_t'|^2 nu^2 dtheta
        nu2_orig = rho.density_at(min(t, 1.0 - 1e-12))
        masses_cv.append(float(trapezoid_circle(np.abs(psi_t.dpsi(nodes)) ** 2 * nu2_orig)))
        schw.append(nodes ** 2 * schwarzian(psi_t, nodes))

    def log_gtilde_prime(t):
        w_t, fpw = flow_a0(t)
        return -float(np.log(np.abs(psi_p_a0 * fpw * (1.0 - abs(w_t) ** 2))))

    gain = log_gtilde_prime(times[-1]) - log_gtilde_prime(times[0])
    return DistortionData(
        times=times, densities=np.array(densities), masses=np.array(masses),
        masses_change_of_var=np.array(masses_cv), psi_t_germs=psis,
        schwarzian_boundary=np.array(schw), capacity_gain=gain,
    )


def _flow_point(z0, rho, t, dt):
    """(g_t(z0), f_t'(g_t(z0))) from one forward flow with its transported
    derivative: f_t'(w_t) = 1/g_t'(z0)."""
    res = flow_forward(np.array([complex(z0)]), rho, t, dt, exact_tail_tau=False)
    if bool(res.exited[0]) and res.tau[0] < t - 1e-12:
        raise ValueError("germ zero-preimage is swallowed by the hull")
    return complex(res.g[0]), complex(np.exp(-res.log_gprime[0]))


def distortion_identity(rho, germ, dt, nt=21, n=None):
    """Evaluate both sides of the Schwarzian transformation law.

    Per time: L(rho~_t) - L(rho_t) against
       (1/4) int e^{2 i theta} S psi_t nu_t^2 dtheta + (1/8)(|rho~_t| - 1);
    integrated over the sampled window with the mass term
       (1/8)(capacity gain - window length).

    Returns (per_time_residual, integrated_residual, data); residuals are
    relative to the ambient local-energy scale.
    """
    data = distort_measure(rho, germ, dt, nt=nt, n=n)
    L_orig = np.array([local_energy(rho.density_at(min(t, 1.0 - 1e-12)))
                       for t in data.times])
    # local_energy makes no probability assumption, so the recovered
    # (unnormalized) image densities feed it directly
    L_img = np.array([local_energy(nu2) for nu2 in data.densities])

    schw_term = 0.25 * np.array([
        float(np.real(trapezoid_circle(s_b * rho.density_at(min(t, 1.0 - 1e-12)))))
        for s_b, t in zip(data.schwarzian_boundary, data.times)
    ])
    mass_term = 0.125 * (data.masses - 1.0)
    lhs_pt = L_img - L_orig
    rhs_pt = schw_term + mass_term
    scale = max(float(np.max(np.abs(L_orig))), float(np.max(np.abs(lhs_pt))), 1e-2)
    per_time_res = float(np.max(np.abs(lhs_pt - rhs_pt))) / scale

    window = data.times[-1] - data.times[0]
    dS = float(simpson(lhs_pt, x=data.times))
    rhs_int = float(simpson(schw_term, x=data.times)) \
        + 0.125 * (data.capacity_gain - window)
    scale_int = max(float(simpson(L_orig, x=data.times)), abs(dS), 1e-2)
    integrated_res = abs(dS - rhs_int) / scale_int
    return per_time_res, integrated_res, data


# -------------------------------------------------------------- reversal

@dataclass
class ReversedChain:
    s_of_t: np.ndarray          # (K, 2) table of (t, s)
    s_grid: np.ndarray
    densities: np.ndarray       # recovered reversed densities on s_grid
    energies: np.ndarray        # local energies on s_grid
    S_original: float
    S_reversed: float
    measure: DrivingMeasure = field(repr=False, default=None)
    new_junctions: list = field(default_factory=list)


def leaf_circles(rho, times, dt, n=None):
    """Fitted (center, radius) of the leaf at each time.

    Times inside the covered window use flowed boundary chains; times past
    the last non-uniform segment reuse the window-end chain composed with
    the exact scaling tail (one batched backward flow). Every leaf must be
    a circle to tolerance, which holds for the supported test measures.
    """
    n = n if n is not None else rho.grid.n
    T = rho.last_nonuniform_time()
    theta = 2.0 * np.pi * np.arange(n) / n
    nodes = np.exp(1j * theta)
    eps = 1e-4
    head = [t for t in times if t <= T + 1e-12]
    tail = [t for t in times if t > T + 1e-12]

    out = {}
    for t in head:
        cs = boundary_chain(rho, t, dt, n=n)
        c, r, dev = maps.fit_circle(cs.boundary_f)
        if dev > CIRCLE_FIT_TOL:
            raise ValueError(
                f"leaf at t={t} deviates from a circle by {dev:.2e}; "
                "reversal supports circle-leaf evolutions only"
            )
        out[t] = (c, r)
    if tail:
        pts = []
        for t in tail:
            scalefac = np.exp(T - t)
            pts.append(scalefac * (1.0 - eps) * nodes)
            pts.append(scalefac * (1.0 - 2.0 * eps) * nodes)
        inv = map_inverse(np.concatenate(pts), rho, T, dt)
        vals = inv.f.reshape(len(tail), 2, n)
        for i, t in enumerate(tail):
            bdry = 2.0 * vals[i, 0] - vals[i, 1]
            c, r, dev = maps.fit_circle(bdry)
            if dev > CIRCLE_FIT_TOL:
                raise ValueError(f"tail leaf at t={t} is not a circle ({dev:.2e})")
            out[t] = (c, r)
    return out


def _junction_times(rho, T, jump_tol=1e-3):
    """Times in (0, T] where the driving density jumps appreciably; the
    reversed chain is only piecewise smooth across these."""
    cuts = set()
    interior = rho.segment_boundaries(0.0, T)[1:-1]
    for b in interior:
        before = rho.density_at(b - 1e-9)
        after = rho.density_at(b + 1e-9)
        if np.max(np.abs(before - after)) > jump_tol:
            cuts.add(round(b, 12))
    if np.max(np.abs(rho.density_at(T - 1e-9)
                     - 1.0 / (2.0 * np.pi))) > jump_tol:
        cuts.add(round(T, 12))
    return sorted(cuts)


def reverse_foliation(rho, dt, n=None, depth=5.0, fit_spacing=0.02,
                      s_density=40.0, ds_rec=1e-4, junctions=None):
    """Invert the foliation through z -> 1/z, recover the reversed driving
    measure on its own capacity-time grid, and compare total energies.

    The inverted leaf of the circle |z - c| = r enclosing the origin is the
    circle with center conj(c)/(|c|^2 - r^2) and radius r/(r^2 - |c|^2);
    the new time is s = -log of the inverted domain's conformal radius,
    strictly decreasing in t. Leaf circles are spline-interpolated in t so
    the recovery's finite differences in s see a smooth chain; splines and
    the s grid are split at density-jump junctions, where the reversed
    chain is only C^0, and the skipped slivers are patched with their edge
    values. `junctions` overrides the jump autodetection, which matters
    when the input is itself a finely-segmented recovered measure.
    """
    n = n if n is not None else rho.grid.n
    T = rho.last_nonuniform_time()
    if junctions is None:
        junctions = _junction_times(rho, T)
    cuts = [0.0] + list(junctions) + [T + depth]
    cuts = sorted(set(round(c, 12) for c in cuts))

    t_all = []
    piece_knots = []
    for a, b in zip(cuts, cuts[1:]):
        knots = np.linspace(a, b, max(int(round((b - a) / fit_spacing)), 8) + 1)
        piece_knots.append(knots)
        t_all.extend(knots.tolist())
    circles = leaf_circles(rho, sorted(set(t_all)), dt, n=n)

    theta = 2.0 * np.pi * np.arange(n) / n
    nodes = np.exp(1j * theta)
    eps = 1e-4

    s_table = []
    s_grids, dens_all, ener_all = [], [], []
    S_rev = 0.0
    for knots in piece_knots:
        cs = np.array([circles[t][0] for t in knots])
        rs = np.array([circles[t][1] for t in knots])
        sp_c, sp_r = CubicSpline(knots, cs), CubicSpline(knots, rs)

        def inverted(t):
            return maps.invert_circle(sp_c(t), sp_r(t))

        def s_of(t):
            C, R = inverted(t)
            return -np.log((R * R - abs(C) ** 2) / R)

        s_knots = np.array([s_of(t) for t in knots])
        if np.any(np.diff(s_knots) >= 0):
            raise RuntimeError("capacity reparametrization s(t) is not decreasing")
        s_table.append(np.column_stack([knots, s_knots]))
        t_of_s = CubicSpline(s_knots[::-1], knots[::-1])

        def rev_sample(s):
            C, R = inverted(float(t_of_s(s)))
            f, _, _ = maps.normalized_map_to_disk(C, R)
            ring = np.vstack([f((1 - eps) * nodes), f((1 - 2 * eps) * nodes)])
            return ChainSample(t=s, boundary_f=2 * ring[0] - ring[1],
                               boundary_logzfpf=np.zeros(n, dtype=complex),
                               ring_radii=(1 - eps, 1 - 2 * eps), ring_f=ring)

        s_lo, s_hi = s_knots[-1] + 4 * ds_rec, s_knots[0] - 4 * ds_rec
        if s_hi <= s_lo:
            continue
        npts = max(int(np.ceil((s_hi - s_lo) * s_density)), 9)
        s_grid = np.linspace(s_lo, s_hi, npts)
        dens, ener = [], []
        for s in s_grid:
            nu2, _ = measure_recovery(rev_sample(s - ds_rec), rev_sample(s),
                                      rev_sample(s + ds_rec))
            dens.append(nu2)
            ener.append(local_energy(nu2))
        dens, ener = np.array(dens), np.array(ener)
        # trapezoid over the piece plus edge slivers skipped by the stencil
        S_rev += float(np.trapezoid(ener, s_grid))
        S_rev += 4 * ds_rec * (ener[0] + ener[-1])
        s_grids.append(s_grid)
        dens_all.append(dens)
        ener_all.append(ener)

    s_grid = np.concatenate(s_grids)
    densities = np.vstack(dens_all)
    energies = np.concatenate(ener_all)

    # assemble the reversed measure (shifted to start at 0) for reuse
    order = np.argsort(s_grid)
    s_sorted = s_grid[order]
    segs = []
    for i, idx in enumerate(order):
        lo = s_sorted[i - 1] if i > 0 else s_sorted[0] - (s_sorted[1] - s_sorted[0])
        mid = 0.5 * (lo + s_sorted[i])
        hi = 0.5 * (s_sorted[i] + (s_sorted[i + 1] if i + 1 < len(s_sorted)
                                   else s_sorted[i] + (s_sorted[i] - lo)))
        clean = np.clip(spectral_trim(densities[idx]), 0.0, None)
        segs.append(DensitySegment(
            mid - s_sorted[0], hi - s_sorted[0], "samples",
            clean / trapezoid_circle(clean)))
    # make segments contiguous from 0
    segs[0] = DensitySegment(0.0, segs[0].t1, "samples", segs[0].nu2)
    fixed = [segs[0]]
    for seg in segs[1:]:
        fixed.append(DensitySegment(fixed[-1].t1, max(seg.t1, fixed[-1].t1 + 1e-9),
                                    "samples", seg.nu2))
    rev_measure = DrivingMeasure(fixed, rho.grid)

    # junction positions in the reversed measure's own (shifted) time
    table = np.vstack(s_table)
    shift = -s_sorted[0]

    def s_at(t_j):
        k = int(np.argmin(np.abs(table[:, 0] - t_j)))
        return table[k, 1]

    new_junctions = sorted({round(s_at(t_j) + shift, 9)
                            for t_j in list(junctions) + [0.0]})
    new_junctions = [j for j in new_junctions if 0.0 < j]

    return ReversedChain(
        s_of_t=table,
        s_grid=s_grid, densities=densities, energies=energies,
        S_original=total_energy(rho), S_reversed=S_rev,
        measure=rev_measure, new_junctions=new_junctions,
    )
