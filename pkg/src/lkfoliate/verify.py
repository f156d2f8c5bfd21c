"""Bundled verification suite: every headline identity checked at its
reference resolution, with one pass/fail record per criterion.

The suite is what `lkfoliate verify` runs and what the acceptance tests
assert on; tolerances are fixed here, not configurable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .chain import boundary_chain, flow_forward
from .energy import (AnalyticCurve, duality_report, equipotential_identity,
                     loewner_energy, grunsky_bound_value)
from .grids import CircleGrid, PlanarField, dirichlet_energy
from .isometry import hadamard_check, iota, kappa
from .maps import example_leaf_circle, example_tau
from .measure import (DensitySegment, DrivingMeasure, example_density,
                      local_energy, poisson_mollify, random_band_limited,
                      time_average, total_energy, uniform_density)
from .transform import (DiskMobiusGerm, IdentityGerm, PolynomialGerm,
                        distortion_identity, reverse_foliation)

__all__ = ["CriterionResult", "CRITERIA", "run_suite"]

DEFAULT_SEED = 20240817


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    summary: str
    seconds: float
    budget_seconds: float
    details: dict = field(default_factory=dict)

    @property
    def within_budget(self):
        return self.seconds <= self.budget_seconds

    def row(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.index:2d} {self.name:28s} {self.summary}"
                f"  ({self.seconds:.1f}s/{self.budget_seconds:.0f}s)")


def _example_measure(n=256, T=1.0):
    grid = CircleGrid(n)
    return DrivingMeasure(
        [DensitySegment(0.0, T, "example_sin2", example_density(grid))], grid)


def _uniform_measure(n=256, T=1.0):
    grid = CircleGrid(n)
    return DrivingMeasure(
        [DensitySegment(0.0, T, "uniform", uniform_density(grid))], grid)


def _criterion(index, name, budget):
    def deco(fn):
        fn.index = index
        fn.criterion_name = name
        fn.budget = budget
        return fn
    return deco


@_criterion(1, "closed-form chain", 10.0)
def closed_form_chain(seed=DEFAULT_SEED, dt=1e-3):
    rho = _example_measure()
    cs = boundary_chain(rho, 1.0, dt, n=256)
    u = np.exp(-1.0)
    b = 1.0 - u
    nodes = np.exp(1j * 2.0 * np.pi * np.arange(256) / 256)
    exact = u * nodes / (1.0 - b * nodes)
    err = float(np.abs(cs.boundary_f - exact).max())
    return err <= 1e-5, f"sup|f_num - f_exact| = {err:.2e} <= 1e-5", {"err": err}


@_criterion(2, "duality ratio (example)", 300.0)
def duality_example(seed=DEFAULT_SEED, dt=1e-3, m=400, threads=None):
    rho = _example_measure()
    rep = duality_report(rho, m=m, dt=dt, levels=3, threads=threads)
    ok = 15.7 <= rep.ratio <= 16.3 and rep.monotone_improvement
    return ok, (f"ratio = {rep.ratio:.4f} in [15.7, 16.3], raw trend "
                f"{[round(lv['ratio'], 3) for lv in rep.refinement]} monotone="
                f"{rep.monotone_improvement}"), rep.to_dict()


@_criterion(3, "duality ratio (random)", 900.0)
def duality_random(seed=DEFAULT_SEED, dt=1e-3, m=400, threads=None):
    grid = CircleGrid(256)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(5):
        nu2 = random_band_limited(grid, rng, max_mode=3)
        rho = DrivingMeasure([DensitySegment(0.0, 0.5, "samples", nu2)], grid)
        rep = duality_report(rho, m=m, dt=dt, levels=3, threads=threads)
        ratios.append(rep.ratio)
    devs = [abs(r - 16.0) / 16.0 for r in ratios]
    ok = all(d <= 0.05 for d in devs)
    return ok, (f"ratios = {[round(r, 3) for r in ratios]}, "
                f"max dev {max(devs):.2%} <= 5%"), {"ratios": ratios}


@_criterion(4, "Hadamard formula", 60.0)
def hadamard(seed=DEFAULT_SEED, dt=1e-3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for rho in (_uniform_measure(), _example_measure()):
        for _ in range(20):
            r = 0.55 * np.sqrt(rng.uniform(0.05, 1.0, size=2))
            ang = rng.uniform(0.0, 2.0 * np.pi, size=2)
            z, w = r * np.exp(1j * ang)
            res, _, _ = hadamard_check(0.3, z, w, rho, dt, dt_fd=1e-4)
            worst = max(worst, res)
    return worst <= 1e-3, f"max relative residual {worst:.2e} <= 1e-3", {"worst": worst}


@_criterion(5, "disintegration isometry", 120.0)
def isometry_parabola(seed=DEFAULT_SEED, dt=1e-3):
    rho = _uniform_measure(T=3.0)
    lap = lambda w: 4.0 * np.ones(np.shape(w))
    u = iota(lap, rho, np.linspace(0.0, 3.0, 301), dt, nr=96)
    norm_sq = u.norm_squared(rho)

    m = 1600
    x = np.linspace(-1.0, 1.0, m)
    Z = x[:, None] + 1j * x[None, :]
    mask = np.abs(Z) < 1.0
    phi = np.where(mask, 1.0 - np.abs(Z) ** 2, np.nan)
    D = dirichlet_energy(PlanarField(x, x, phi, mask))

    rng = np.random.default_rng(seed)
    pts = (0.9 * np.sqrt(rng.uniform(0.01, 1.0, 50))
           * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, 50)))
    rec = kappa(u, rho, pts, dt)
    sup = float(np.abs(rec - (1.0 - np.abs(pts) ** 2)).max())

    ok = abs(norm_sq - 2.0) <= 1e-3 and abs(D - 2.0) <= 1e-3 and sup <= 1e-3
    return ok, (f"||iota||^2 = {norm_sq:.6f}, D = {D:.6f} (both 2 +/- 1e-3), "
                f"recon sup {sup:.2e} <= 1e-3"), {
                    "norm_sq": norm_sq, "D": D, "sup": sup}


@_criterion(6, "winding closed form", 60.0)
def winding_closed_form(seed=DEFAULT_SEED, dt=1e-3):
    from .foliation import winding_field

    rho = _example_measure()
    wf = winding_field(rho, 64, dt)
    Z = wf.phi.points
    mask = wf.mask
    c1, r1 = example_leaf_circle(1.0)
    in_hull = mask & (np.abs(Z - c1) >= r1)
    in_dom = mask & (np.abs(Z - c1) < r1)
    nh, nd = int(in_hull.sum()), int(in_dom.sum())

    tau = example_tau(np.where(mask, Z, 0.5), t_cap=1.0)
    u = np.exp(-np.minimum(tau, 1.0))
    phi_exact = -np.angle(Z * (1.0 - u) + u)
    # hull branch of the stated closed form, corrected to the continuous one
    hull_form = np.angle(Z / (Z - 1.0) ** 2) + np.pi
    wrap = np.round((phi_exact - hull_form) / (2.0 * np.pi))
    branch_gap = np.where(in_hull, np.abs(hull_form + 2.0 * np.pi * wrap - phi_exact), 0.0)

    err = np.abs(np.where(mask, wf.phi.values - phi_exact, 0.0))
    e_hull = float(np.nanmax(np.where(in_hull, err, 0.0)))
    e_dom = float(np.nanmax(np.where(in_dom, err, 0.0)))
    ok = (e_hull <= 1e-3 and e_dom <= 1e-3 and nh >= 1000 and nd >= 1000
          and float(branch_gap.max()) <= 1e-10)
    return ok, (f"max err: hull {e_hull:.2e} ({nh} pts), interior {e_dom:.2e} "
                f"({nd} pts) <= 1e-3"), {"e_hull": e_hull, "e_dom": e_dom}


@_criterion(7, "Grunsky bound", 120.0)
def grunsky_bound(seed=DEFAULT_SEED, dt=1e-3):
    rows = []
    ok = True
    for name, rho in (("uniform", _uniform_measure()), ("example", _example_measure())):
        for t in (0.25, 0.5, 1.0):
            val = grunsky_bound_value(rho, t, dt, m=200)
            good = val <= 2.0 * t * 1.05
            ok = ok and good
            rows.append((name, t, val))
    worst = max(v / (2.0 * t) for _, t, v in rows)
    return ok, f"max D(arg f_t/z)/(2t) = {worst:.3f} <= 1.05", {"rows": rows}


@_criterion(8, "leaf energy bound", 60.0)
def leaf_energy_bound(seed=DEFAULT_SEED, dt=1e-3):
    rho = _example_measure()
    rows, ok = [], True
    for t in (0.25, 0.5, 1.0):
        il = loewner_energy(AnalyticCurve.example_leaf(t), m=400)
        bound = 16.0 * total_energy(rho, 0.0, t)
        good = il <= bound * 1.05 + 1e-3
        ok = ok and good
        rows.append((t, il, bound))
    return ok, ("I_L(leaf t) vs 16 S_[0,t]: " +
                ", ".join(f"t={t}: {il:.2e} <= {b:.3f}" for t, il, b in rows)), {
                    "rows": rows}


@_criterion(9, "equipotential identity", 180.0)
def equipotential(seed=DEFAULT_SEED, dt=1e-3):
    res_off, lhs1, rhs1 = equipotential_identity(AnalyticCurve.offset_circle(0.2, 0.9))
    res_leaf, lhs2, rhs2 = equipotential_identity(AnalyticCurve.example_leaf(1.0))
    ok = res_off <= 0.02 and res_leaf <= 0.02
    return ok, (f"residuals: offset {res_off:.2e}, leaf {res_leaf:.2e} <= 2%"), {
        "offset": (res_off, lhs1, rhs1), "leaf": (res_leaf, lhs2, rhs2)}


@_criterion(10, "energy reversibility", 300.0)
def reversibility(seed=DEFAULT_SEED, dt=1e-3):
    rho = _example_measure()
    rc = reverse_foliation(rho, dt=dt)
    rel = abs(rc.S_reversed - rc.S_original) / rc.S_original
    return rel <= 0.03, (f"S = {rc.S_original:.6f}, S_rev = {rc.S_reversed:.6f}, "
                         f"rel {rel:.2%} <= 3%"), {"rel": rel}


@_criterion(11, "conformal distortion", 300.0)
def distortion(seed=DEFAULT_SEED, dt=1e-3):
    rho = _example_measure()
    pt_id, it_id, _ = distortion_identity(rho, IdentityGerm(), dt, nt=11)
    pt_mob, it_mob, data = distortion_identity(rho, DiskMobiusGerm(0.15), dt, nt=41)
    schw_mob = float(np.abs(data.schwarzian_boundary).max())
    pt_pol, it_pol, _ = distortion_identity(rho, PolynomialGerm({2: 0.05}), dt, nt=21)
    ok = (max(pt_id, it_id) <= 1e-4
          and max(pt_mob, it_mob) <= 1e-3 and schw_mob <= 1e-10
          and it_pol <= 0.02)
    return ok, (f"identity {max(pt_id, it_id):.1e} <= 1e-4; Moebius "
                f"{max(pt_mob, it_mob):.1e} <= 1e-3 (Schwarzian {schw_mob:.1e}); "
                f"poly integrated {it_pol:.1e} <= 2%"), {
                    "identity": (pt_id, it_id), "mobius": (pt_mob, it_mob),
                    "poly": (pt_pol, it_pol)}


@_criterion(12, "mollification monotone", 30.0)
def mollification(seed=DEFAULT_SEED, dt=1e-3):
    grid = CircleGrid(256)
    rng = np.random.default_rng(seed)
    ok = True
    worst_gap = 0.0
    for _ in range(20):
        nu2 = random_band_limited(grid, rng, max_mode=6, amplitude=0.6)
        L0 = local_energy(nu2)
        for r in (0.9, 0.99):
            Lr = local_energy(poisson_mollify(nu2, r))
            ok = ok and Lr <= L0 + 1e-10
            worst_gap = max(worst_gap, Lr - L0)
        seg_a = DensitySegment(0.0, 0.5, "samples", nu2)
        seg_b = DensitySegment(0.5, 1.0, "samples",
                               random_band_limited(grid, rng, max_mode=6, amplitude=0.6))
        rho = DrivingMeasure([seg_a, seg_b], grid)
        S0 = total_energy(rho)
        S_avg = total_energy(time_average(rho, 0))
        ok = ok and S_avg <= S0 + 1e-10
        worst_gap = max(worst_gap, S_avg - S0)
    return ok, f"all decreases hold (worst gap {worst_gap:.1e} <= 0)", {}


CRITERIA = [
    closed_form_chain, duality_example, duality_random, hadamard,
    isometry_parabola, winding_closed_form, grunsky_bound, leaf_energy_bound,
    equipotential, reversibility, distortion, mollification,
]


def run_suite(only=None, seed=DEFAULT_SEED, threads=None, verbose=True):
    """Run the acceptance criteria (all, or the 1-based indices in `only`)
    and return the list of CriterionResult."""
    results = []
    for fn in CRITERIA:
        if only and fn.index not in only:
            continue
        start = time.time()
        kwargs = {"seed": seed}
        if fn.index in (2, 3):
            kwargs["threads"] = threads
        try:
            passed, summary, details = fn(**kwargs)
        except Exception as exc:  # a crashed criterion is a failed criterion
            passed, summary, details = False, f"raised {type(exc).__name__}: {exc}", {}
        elapsed = time.time() - start
        res = CriterionResult(index=fn.index, name=fn.criterion_name,
                              passed=bool(passed), summary=summary,
                              seconds=elapsed, budget_seconds=fn.budget,
                              details=details)
        results.append(res)
        if verbose:
            print(res.row(), flush=True)
    return results
