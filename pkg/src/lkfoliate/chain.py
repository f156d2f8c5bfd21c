"""Loewner flow integration: the uniformizing flow g_t, its inverse f_t,
transported log-derivatives, exit times, conformal leaf parametrizations,
and recovery of the driving density from a sampled chain.

The uniformizing flow solves dy/dt = y * H_t(y) forward from y(0) = z; the
inverse map f_t is obtained by integrating the same equation backward from
(t, w), which contracts toward the origin and is numerically stable. All
angular quantities are accumulated as integrals along trajectories, never
as wrapped arguments, so no 2*pi branch bookkeeping is needed anywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grids import CircleGrid, trapezoid_circle
from .herglotz import HerglotzEvaluator

__all__ = [
    "EPS_EXIT",
    "EPS_BDY",
    "StepSizeError",
    "PointNotInDomainError",
    "RecoveryError",
    "FlowResult",
    "InverseResult",
    "ChainSample",
    "flow_forward",
    "map_inverse",
    "vartheta",
    "boundary_chain",
    "measure_recovery",
    "polyline_self_intersects",
]

EPS_EXIT = 1e-6
EPS_BDY = 1e-4
TAU_INF = np.inf


class StepSizeError(RuntimeError):
    """A single step jumped far outside the disk; reduce dt."""


class PointNotInDomainError(ValueError):
    """The point exits the evolving domain before the requested time."""


class RecoveryError(RuntimeError):
    """Driving-density recovery failed its mass sanity check."""


def _evaluators(rho):
    # evaluator cache lives on the measure: flows are called repeatedly on
    # finely-segmented recovered measures and coefficient FFTs add up
    cache = rho.__dict__.setdefault("_evaluator_cache", {})

    def get(t):
        for i, seg in enumerate(rho.segments):
            if seg.t0 - 1e-14 <= t < seg.t1 - 1e-14:
                if i not in cache:
                    cache[i] = HerglotzEvaluator(seg.nu2, uniform=seg.is_uniform)
                return cache[i], seg.is_uniform
        if "uniform" not in cache:
            cache["uniform"] = HerglotzEvaluator(
                np.full(rho.grid.n, 1.0 / (2.0 * np.pi)), uniform=True
            )
        return cache["uniform"], True

    return get


def _intervals(rho, t_begin, t_end):
    """Consecutive (lo, hi, evaluator, uniform) intervals covering [t_begin, t_end]."""
    get = _evaluators(rho)
    cuts = rho.segment_boundaries(t_begin, t_end)
    out = []
    for lo, hi in zip(cuts, cuts[1:]):
        ev, uni = get(0.5 * (lo + hi))
        out.append((lo, hi, ev, uni))
    return out


def _rk4_flow(y, a, b, t, h, ev):
    """One RK4 step of the joint system
    dy = y H(y), da = y H'(y), db = H(y) + y H'(y); h may be an array."""

    def stage(ys):
        H = ev.eval(ys)
        Hp = ev.deriv(ys)
        yHp = ys * Hp
        return ys * H, yHp, H + yHp

    k1y, k1a, k1b = stage(y)
    k2y, k2a, k2b = stage(y + 0.5 * h * k1y)
    k3y, k3a, k3b = stage(y + 0.5 * h * k2y)
    k4y, k4a, k4b = stage(y + h * k3y)
    y1 = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    a1 = a + (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
    b1 = b + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
    return y1, a1, b1


@dataclass
class FlowResult:
    """Forward-flow output for a batch of points.

    g          endpoint g_{t}(z) (at min(t_end, tau))
    log_gprime transported log g_t'(z), continuous branch
    winding    Im of the accumulated integral of y H'(y), i.e. theta[g_t]
    tau        exit time (inf where the point never exits by t_end, unless
               the tail is uniform, in which case tau is continued exactly)
    exited     bool mask
    extra      trapezoid accumulation of the optional extra integrand
    """

    g: np.ndarray
    log_gprime: np.ndarray
    winding: np.ndarray
    tau: np.ndarray
    exited: np.ndarray
    extra: np.ndarray | None = None


def flow_forward(z, rho, t_end, dt, eps_exit=EPS_EXIT, extra=None,
                 exact_tail_tau=True):
    """Integrate the uniformizing flow of every point in z up to t_end.

    Points are frozen when |y| reaches 1 - eps_exit; the exit time is then
    refined by bisection over the last accepted step to a tolerance of
    dt * 1e-3. The origin is a fixed point with tau = +inf. `extra`, if
    given, is a callable (t, y) -> real values accumulated by the trapezoid
    rule along each trajectory (used for Poisson-type flow integrals).
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    y = z.ravel().copy()
    npts = y.size
    A = np.zeros(npts, dtype=complex)
    B = np.zeros(npts, dtype=complex)
    EX = np.zeros(npts) if extra is not None else None
    tau = np.full(npts, TAU_INF)
    exited = np.zeros(npts, dtype=bool)
    thresh = 1.0 - eps_exit

    # points starting on/outside the exit radius exit immediately; the
    # origin is an exact fixed point of the stepped system (tau stays inf)
    # and its derivative accumulator still collects int H_s(0) ds
    already = np.abs(y) >= thresh
    tau[already] = 0.0
    exited[already] = True
    alive = ~already

    fprev = extra(0.0, y) if extra is not None else None

    for lo, hi, ev, uniform in _intervals(rho, 0.0, t_end):
        if not np.any(alive):
            break
        if uniform and extra is None:
            # exact scaling update for the whole slab, exits in closed form
            idx = np.nonzero(alive)[0]
            width = hi - lo
            with np.errstate(divide="ignore"):
                d_exit = np.log(thresh / np.abs(y[idx]))
            leaves = d_exit <= width
            li = idx[leaves]
            tau[li] = lo - np.log(np.abs(y[li]))   # exact, no eps bias
            y[li] *= np.exp(d_exit[leaves])
            B[li] += d_exit[leaves]
            exited[li] = True
            alive[li] = False
            si = idx[~leaves]
            y[si] *= np.exp(width)
            B[si] += width
            continue
        nsub = max(1, int(np.ceil((hi - lo) / dt - 1e-9)))
        h = (hi - lo) / nsub
        t = lo
        for _ in range(nsub):
            idx = np.nonzero(alive)[0]
            if idx.size == 0:
                break
            y0, a0, b0 = y[idx], A[idx], B[idx]
            if uniform:
                y1 = y0 * np.exp(h)
                a1, b1 = a0, b0 + h
            else:
                y1, a1, b1 = _rk4_flow(y0, a0, b0, t, h, ev)
            r1 = np.abs(y1)
            if np.any(r1 > 1.5):
                raise StepSizeError(
                    "flow step left the disk by a large margin; reduce dt"
                )
            crossed = r1 >= thresh
            if np.any(crossed):
                ci = idx[crossed]
                yc, ac, bc = y[ci], A[ci], B[ci]
                if uniform:
                    # exact exit time within a uniform slab
                    d = np.log(thresh / np.abs(yc))
                    ye = yc * np.exp(d)
                    ae, be = ac, bc + d
                    correction = eps_exit
                else:
                    d, ye, ae, be = _bisect_exit(yc, ac, bc, t, h, ev, thresh,
                                                 tol=dt * 1e-3)
                    # first-order continuation of the eps_exit gap:
                    # d log|g|/dt = Re H at the exit point
                    speed = np.maximum(np.real(ev.eval(ye)), 1e-12)
                    correction = np.minimum(eps_exit / speed, 1e-2)
                if extra is not None:
                    fe = extra(t + d, ye)
                    EX[ci] += 0.5 * d * (fprev[ci] + fe)
                y[ci], A[ci], B[ci] = ye, ae, be
                tau[ci] = t + d + correction
                exited[ci] = True
                alive[ci] = False
            ok = idx[~crossed]
            if ok.size:
                y[ok] = y1[~crossed]
                A[ok] = a1[~crossed]
                B[ok] = b1[~crossed]
            t += h
            if extra is not None:
                fnew = extra(t, y)
                live = alive.copy()
                live[idx[crossed]] = False
                EX[live] += 0.5 * h * (fprev[live] + fnew[live])
                fprev = fnew

    if exact_tail_tau and np.any(alive):
        # uniform continuation past the covered window: |g| grows like e^s
        if t_end >= rho.last_nonuniform_time():
            ai = np.nonzero(alive)[0]
            with np.errstate(divide="ignore"):
                tau[ai] = t_end - np.log(np.abs(y[ai]))

    res = FlowResult(
        g=y.reshape(shape),
        log_gprime=B.reshape(shape),
        winding=np.imag(A).reshape(shape),
        tau=tau.reshape(shape),
        exited=exited.reshape(shape),
        extra=EX.reshape(shape) if EX is not None else None,
    )
    return res


def _bisect_exit(y0, a0, b0, t, h, ev, thresh, tol):
    """Refine per-point substep lengths d in (0, h] with |y(t+d)| = thresh."""
    lo = np.zeros_like(np.real(y0))
    hi = np.full_like(lo, h)
    d = 0.5 * (lo + hi)
    while np.any(hi - lo > tol):
        yd, _, _ = _rk4_flow(y0, a0, b0, t, d, ev)
        over = np.abs(yd) >= thresh
        hi = np.where(over, d, hi)
        lo = np.where(over, lo, d)
        d = 0.5 * (lo + hi)
    yd, ad, bd = _rk4_flow(y0, a0, b0, t, d, ev)
    return d, yd, ad, bd


@dataclass
class InverseResult:
    """Backward-flow output: f = f_t(w), transported log f_t'(w), and the
    continuous branch of log(w f_t'(w)/f_t(w)) (zero at the origin)."""

    f: np.ndarray
    log_fprime: np.ndarray
    log_zfpf: np.ndarray


def map_inverse(w, rho, t, dt):
    """Evaluate f_t = g_t^{-1} at w by integrating the flow backward in time.

    The backward flow moves points inward, so no exit handling is needed.
    The joint system's accumulators run from t down to 0, so they pick up
    A = -int_0^t y H'(y) ds and B = -int_0^t (H + y H') ds, which are
    exactly log(w f_t'(w)/f_t(w)) and log f_t'(w) (continuous branches,
    zero at the origin).
    """
    w = np.asarray(w, dtype=complex)
    shape = w.shape
    y = w.ravel().copy()
    A = np.zeros(y.size, dtype=complex)
    B = np.zeros(y.size, dtype=complex)

    for lo, hi, ev, uniform in reversed(_intervals(rho, 0.0, t)):
        hi = min(hi, t)
        if hi <= lo:
            continue
        if uniform:
            # exact scaling over the whole slab
            y *= np.exp(-(hi - lo))
            B += -(hi - lo)
            continue
        nsub = max(1, int(np.ceil((hi - lo) / dt - 1e-9)))
        h = (hi - lo) / nsub
        s = hi
        for _ in range(nsub):
            y, A, B = _rk4_flow(y, A, B, s, -h, ev)
            s -= h

    return InverseResult(
        f=y.reshape(shape),
        log_fprime=B.reshape(shape),
        log_zfpf=A.reshape(shape),
    )


def vartheta(rho, t, z, dt):
    """Winding theta[g_t](z) = int_0^t alpha_s(g_s(z)) ds along the flow.

    Branch-free by construction. Raises PointNotInDomainError if any point
    exits before t.
    """
    res = flow_forward(z, rho, t, dt, exact_tail_tau=False)
    if np.any(res.exited & (res.tau < t - 1e-12)):
        raise PointNotInDomainError(f"point exits before t = {t}")
    return res.winding


@dataclass
class ChainSample:
    """Conformal boundary samples of one chain time: f_t at the grid angles
    (Richardson-extrapolated to the circle) plus log(z f_t'/f_t) samples and
    the two evaluation rings used for recovery."""

    t: float
    boundary_f: np.ndarray        # f_t(e^{i theta_j}), extrapolated
    boundary_logzfpf: np.ndarray  # log(z f'/f) at e^{i theta_j}, extrapolated
    ring_radii: tuple[float, float]
    ring_f: np.ndarray            # shape (2, n): f_t on the two rings

    @property
    def n(self):
        return self.boundary_f.shape[0]

    def conformal_radius_log(self):
        """log f_t'(0) from the circle mean of log(f(z)/z) (mean-value)."""
        w = np.exp(1j * 2.0 * np.pi * np.arange(self.n) / self.n)
        return float(np.mean(np.log(np.abs(self.boundary_f / w))))


def boundary_chain(rho, t, dt, n=None, eps_bdy=EPS_BDY):
    """Sample the leaf gamma_t = f_t(S^1) in its conformal parametrization.

    Integrates the backward flow from two rings just inside the circle and
    Richardson-extrapolates to the boundary (O(eps^2)). A self-intersecting
    sampled polyline triggers a leaf-degeneracy warning, not an error.
    """
    n = n if n is not None else rho.grid.n
    theta = 2.0 * np.pi * np.arange(n) / n
    nodes = np.exp(1j * theta)
    r1, r2 = 1.0 - eps_bdy, 1.0 - 2.0 * eps_bdy
    inv1 = map_inverse(r1 * nodes, rho, t, dt)
    inv2 = map_inverse(r2 * nodes, rho, t, dt)
    f_b = 2.0 * inv1.f - inv2.f
    log_b = 2.0 * inv1.log_zfpf - inv2.log_zfpf
    if polyline_self_intersects(f_b):
        warnings.warn(f"sampled leaf at t={t} self-intersects", RuntimeWarning)
    return ChainSample(
        t=t,
        boundary_f=f_b,
        boundary_logzfpf=log_b,
        ring_radii=(r1, r2),
        ring_f=np.vstack([inv1.f, inv2.f]),
    )


def measure_recovery(sample_prev, sample_mid, sample_next, normalize=True,
                     mass_tol=1e-2):
    """Recover the driving density at sample_mid.t from three chain samples.

    Rearranging the Loewner equation, H_t(z) = -dt f_t(z) / (z f_t'(z));
    the density is Re H_t(e^{i theta})/(2 pi). The time derivative is a
    central difference, f' is spectral in theta, and the density is
    evaluated on both rings then Richardson-extrapolated to the circle.

    With normalize=True the result is scaled to unit mass when within
    mass_tol of 1 (RecoveryError otherwise); with normalize=False the raw
    density and its mass are returned (used where the evolved family is not
    capacity-normalized).
    """
    dt_back = sample_mid.t - sample_prev.t
    dt_fwd = sample_next.t - sample_mid.t
    if dt_back <= 0 or dt_fwd <= 0:
        raise ValueError("chain samples must be time-ordered")
    n = sample_mid.n
    theta = 2.0 * np.pi * np.arange(n) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    k[n // 2] = 0.0

    dens = []
    for ring in (0, 1):
        r = sample_mid.ring_radii[ring]
        z = r * np.exp(1j * theta)
        f_mid = sample_mid.ring_f[ring]
        dft = (sample_next.ring_f[ring] - sample_prev.ring_f[ring]) / (dt_back + dt_fwd)
        dfth = np.fft.ifft(1j * k * np.fft.fft(f_mid))
        fprime = dfth / (1j * z)
        H = -dft / (z * fprime)
        dens.append(np.real(H) / (2.0 * np.pi))
    # Richardson in the ring offset: rings sit at 1-eps and 1-2eps
    nu2 = 2.0 * dens[0] - dens[1]
    nu2 = np.clip(nu2, 0.0, None)
    mass = float(trapezoid_circle(nu2))
    if not normalize:
        return nu2, mass
    if abs(mass - 1.0) > mass_tol:
        raise RecoveryError(
            f"recovered density mass {mass:.4f} deviates from 1 by more than "
            f"{mass_tol}; chain sampling too coarse"
        )
    return nu2 / mass, mass


def polyline_self_intersects(pts):
    """True if the closed polyline through pts properly self-intersects."""
    p = np.asarray(pts)
    nseg = len(p)
    a = p
    b = np.roll(p, -1)
    # pairwise proper-crossing test on non-adjacent segments
    ax, ay = a.real, a.imag
    bx, by = b.real, b.imag

    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    i, j = np.triu_indices(nseg, k=2)
    # skip the wrap-around adjacency (first and last segment share a node)
    keep = ~((i == 0) & (j == nseg - 1))
    i, j = i[keep], j[keep]
    o1 = orient(ax[i], ay[i], bx[i], by[i], ax[j], ay[j])
    o2 = orient(ax[i], ay[i], bx[i], by[i], bx[j], by[j])
    o3 = orient(ax[j], ay[j], bx[j], by[j], ax[i], ay[i])
    o4 = orient(ax[j], ay[j], bx[j], by[j], bx[i], by[i])
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    return bool(np.any(crossing))
