"""Command-line surface: one subcommand per identity plus evolution and
field exports. Reports land as JSON-shaped text with delimited data files
and matplotlib figures next to them.

Exit status: 0 success, 1 criterion failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io_out, verify
from .chain import boundary_chain
from .energy import AnalyticCurve, duality_report, equipotential_identity, loewner_energy
from .foliation import extract_leaves, winding_field, whole_plane_field
from .grids import CircleGrid, ConfigurationError, dirichlet_energy
from .isometry import hadamard_check, iota, kappa
from .measure import (DensitySegment, DrivingMeasure, InvalidMeasureError,
                      example_density, parse_measure_config, uniform_density)
from .transform import (DiskMobiusGerm, IdentityGerm, PolynomialGerm,
                        RotationGerm, distortion_identity, reverse_foliation)

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_CONFIG = 2


def _load_measure(args):
    n = args.n
    grid = CircleGrid(n)
    if args.config:
        try:
            with open(args.config) as fh:
                return parse_measure_config(json.load(fh), grid)
        except FileNotFoundError:
            raise InvalidMeasureError(f"measure config not found: {args.config}")
    if args.measure == "uniform":
        seg = DensitySegment(0.0, args.T, "uniform", uniform_density(grid))
    elif args.measure == "example":
        seg = DensitySegment(0.0, args.T, "example_sin2", example_density(grid))
    else:
        raise InvalidMeasureError(
            f"unknown built-in measure {args.measure!r}; give --config instead")
    return DrivingMeasure([seg], grid)


def _run_config(args):
    keys = ("command", "config", "measure", "n", "m", "dt", "T", "t_max",
            "times", "seed", "threads", "out_dir")
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


def _outdir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _parse_curve(spec):
    kind, _, rest = spec.partition(":")
    if kind == "circle":
        return AnalyticCurve.centered_circle(float(rest or 1.0))
    if kind == "offset":
        a, r = (float(v) for v in rest.split(","))
        return AnalyticCurve.offset_circle(a, r)
    if kind == "example-leaf":
        return AnalyticCurve.example_leaf(float(rest or 1.0))
    raise ConfigurationError(f"unknown curve spec {spec!r}")


def _parse_germ(spec):
    kind, _, rest = spec.partition(":")
    if kind == "identity":
        return IdentityGerm()
    if kind == "rotation":
        return RotationGerm(float(rest or 0.5))
    if kind == "mobius":
        return DiskMobiusGerm(complex(rest or 0.1))
    if kind == "poly":
        return PolynomialGerm({2: float(rest or 0.05)})
    raise ConfigurationError(f"unknown germ spec {spec!r}")


def cmd_evolve(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    times = [float(t) for t in args.times.split(",")]
    samples = [boundary_chain(rho, t, args.dt, n=args.n) for t in times]
    io_out.write_chain_csv(os.path.join(out, "chain.csv"), samples, cfg)
    print(f"wrote {out}/chain.csv ({len(samples)} times)")
    return EXIT_OK


def cmd_leaves(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    times = [float(t) for t in args.times.split(",")]
    fol = extract_leaves(rho, times, args.dt, n=args.n)
    io_out.write_leaves_svg(os.path.join(out, "leaves.svg"), fol, cfg)
    rows = [(leaf.t, j, p.real, p.imag)
            for leaf in fol.leaves for j, p in enumerate(leaf.points)]
    io_out.write_table_csv(os.path.join(out, "leaves.csv"),
                           ["t", "j", "re", "im"], rows, cfg)
    io_out.save_leaves_figure(os.path.join(out, "leaves.png"), fol, cfg)
    print(f"wrote {out}/leaves.{{svg,csv,png}}; "
          f"continuity sup-steps {np.round(fol.continuity_sup, 5).tolist()}")
    return EXIT_OK


def cmd_winding(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    if args.whole_plane:
        wf = whole_plane_field(rho, args.m, args.dt, threads=args.threads)
    else:
        wf = winding_field(rho, args.m, args.dt, t_max=args.t_max,
                           threads=args.threads)
    io_out.write_field_csv(os.path.join(out, "winding.csv"), wf, cfg)
    io_out.write_pgm(os.path.join(out, "winding.pgm"), wf.phi,
                     args.pgm_min, args.pgm_max, cfg)
    io_out.save_field_figure(os.path.join(out, "winding.png"), wf, cfg)
    print(f"wrote {out}/winding.{{csv,pgm,png}}")
    return EXIT_OK


def cmd_duality(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    rep = duality_report(rho, m=args.m, dt=args.dt, t_max=args.t_max,
                         threads=args.threads, config=cfg,
                         leaf_times=(0.25, 0.5, 1.0) if args.measure == "example" else (),
                         grunsky_times=(0.5,) if args.measure == "example" else ())
    io_out.write_report_json(os.path.join(out, "duality.json"), rep.to_dict(), cfg)
    wf = winding_field(rho, args.m, args.dt, t_max=args.t_max, threads=args.threads)
    io_out.write_pgm(os.path.join(out, "winding.pgm"), wf.phi,
                     args.pgm_min, args.pgm_max, cfg)
    fol = extract_leaves(rho, [0.125 * k for k in range(1, 8)], args.dt, n=args.n)
    io_out.write_leaves_svg(os.path.join(out, "leaves.svg"), fol, cfg)
    io_out.save_field_figure(os.path.join(out, "winding.png"), wf, cfg)
    io_out.save_leaves_figure(os.path.join(out, "leaves.png"), fol, cfg)
    io_out.save_trend_figure(os.path.join(out, "ratio_trend.png"), rep.refinement, cfg)
    print(f"S = {rep.S:.6f}  D = {rep.D:.6f}  ratio = {rep.ratio:.4f} "
          f"(raw {rep.ratio_raw:.4f})")
    print(f"wrote {out}/duality.json and figures")
    return EXIT_OK


def cmd_energy(args):
    cfg = _run_config(args)
    out = _outdir(args)
    curve = _parse_curve(args.curve)
    il = loewner_energy(curve, m=args.m)
    res, lhs, rhs = equipotential_identity(curve, m=args.m)
    payload = {"curve": curve.label, "loewner_energy": il,
               "equipotential_identity": {"residual": res, "lhs_16S": lhs,
                                          "rhs": rhs}}
    io_out.write_report_json(os.path.join(out, "energy.json"), payload, cfg)
    print(f"I_L({curve.label}) = {il:.6e}; equipotential residual {res:.2e}")
    return EXIT_OK


def cmd_isometry_check(args):
    cfg = _run_config(args)
    out = _outdir(args)
    res = verify.isometry_parabola(seed=args.seed, dt=args.dt)
    passed, summary, details = res
    io_out.write_report_json(os.path.join(out, "isometry.json"),
                             {"passed": passed, "summary": summary, **details}, cfg)
    print(summary)
    return EXIT_OK if passed else EXIT_CRITERION


def cmd_hadamard_check(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    rng = np.random.default_rng(args.seed)
    rows = []
    for _ in range(args.pairs):
        r = 0.55 * np.sqrt(rng.uniform(0.05, 1.0, size=2))
        ang = rng.uniform(0.0, 2.0 * np.pi, size=2)
        z, w = r * np.exp(1j * ang)
        res, lhs, rhs = hadamard_check(args.t, z, w, rho, args.dt, dt_fd=args.dt_fd)
        rows.append((z.real, z.imag, w.real, w.imag, res))
    io_out.write_table_csv(os.path.join(out, "hadamard.csv"),
                           ["re_z", "im_z", "re_w", "im_w", "residual"], rows, cfg)
    worst = max(r[-1] for r in rows)
    print(f"max Hadamard residual over {args.pairs} pairs: {worst:.2e}")
    return EXIT_OK if worst <= 1e-3 else EXIT_CRITERION


def cmd_distort(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    germ = _parse_germ(args.germ)
    pt, it, data = distortion_identity(rho, germ, args.dt, nt=args.nt)
    rows = [(t, m, mcv) for t, m, mcv in
            zip(data.times, data.masses, data.masses_change_of_var)]
    io_out.write_table_csv(os.path.join(out, "distort_masses.csv"),
                           ["t", "mass", "mass_change_of_var"], rows, cfg)
    io_out.write_report_json(os.path.join(out, "distort.json"),
                             {"germ": args.germ, "per_time_residual": pt,
                              "integrated_residual": it,
                              "capacity_gain": data.capacity_gain}, cfg)
    print(f"distortion residuals: per-time {pt:.2e}, integrated {it:.2e}")
    return EXIT_OK


def cmd_reverse(args):
    rho = _load_measure(args)
    cfg = _run_config(args)
    out = _outdir(args)
    rc = reverse_foliation(rho, dt=args.dt, n=args.n)
    io_out.write_table_csv(os.path.join(out, "reversal_s_of_t.csv"),
                           ["t", "s"], [tuple(r) for r in rc.s_of_t], cfg)
    rows = [(s, e) for s, e in zip(rc.s_grid, rc.energies)]
    io_out.write_table_csv(os.path.join(out, "reversal_energies.csv"),
                           ["s", "local_energy"], rows, cfg)
    rel = abs(rc.S_reversed - rc.S_original) / max(rc.S_original, 1e-300)
    io_out.write_report_json(os.path.join(out, "reversal.json"),
                             {"S": rc.S_original, "S_reversed": rc.S_reversed,
                              "relative_gap": rel}, cfg)
    print(f"S = {rc.S_original:.6f}, S_reversed = {rc.S_reversed:.6f}, "
          f"gap {rel:.2%}")
    return EXIT_OK


def cmd_verify(args):
    cfg = _run_config(args)
    only = set(int(k) for k in args.only.split(",")) if args.only else None
    results = verify.run_suite(only=only, seed=args.seed, threads=args.threads)
    out = _outdir(args)
    payload = [{"index": r.index, "name": r.name, "passed": r.passed,
                "summary": r.summary, "seconds": r.seconds,
                "within_budget": r.within_budget} for r in results]
    io_out.write_report_json(os.path.join(out, "verify.json"),
                             {"results": payload,
                              "all_passed": all(r.passed for r in results)}, cfg)
    failed = [r for r in results if not r.passed]
    over = [r for r in results if not r.within_budget]
    for r in over:
        print(f"note: criterion {r.index} exceeded its runtime budget "
              f"({r.seconds:.0f}s > {r.budget_seconds:.0f}s)")
    if failed:
        print(f"{len(failed)} criterion(s) FAILED")
        return EXIT_CRITERION
    print("all criteria passed")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="lkfoliate",
        description=("Loewner-Kufarev evolution engine: foliations, winding "
                     "fields, and energy identities"))
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, times_default=None):
        sp.add_argument("--config", help="measure config JSON path")
        sp.add_argument("--measure", default="example",
                        choices=["example", "uniform"],
                        help="built-in measure when no --config is given")
        sp.add_argument("--n", type=int, default=256,
                        help="circle grid size (power of two)")
        sp.add_argument("--m", type=int, default=400, help="planar grid size")
        sp.add_argument("--dt", type=float, default=1e-3, help="flow step")
        sp.add_argument("--T", type=float, default=1.0,
                        help="built-in measure window length")
        sp.add_argument("--t-max", type=float, default=None, dest="t_max")
        sp.add_argument("--seed", type=int, default=verify.DEFAULT_SEED)
        sp.add_argument("--threads", type=int, default=os.cpu_count())
        sp.add_argument("--out-dir", default="out", dest="out_dir")
        if times_default:
            sp.add_argument("--times", default=times_default)

    sp = sub.add_parser("evolve", help="write chain CSVs at requested times")
    common(sp, times_default="0.5,1.0")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("leaves", help="extract leaves; SVG/CSV/PNG")
    common(sp, times_default="0.2,0.4,0.6,0.8,1.0")
    sp.set_defaults(func=cmd_leaves)

    sp = sub.add_parser("winding", help="winding field; CSV/PGM/PNG")
    common(sp)
    sp.add_argument("--whole-plane", action="store_true")
    sp.add_argument("--pgm-min", type=float, default=-1.5)
    sp.add_argument("--pgm-max", type=float, default=1.5)
    sp.set_defaults(func=cmd_winding)

    sp = sub.add_parser("duality", help="energy duality report with figures")
    common(sp)
    sp.add_argument("--pgm-min", type=float, default=-1.5)
    sp.add_argument("--pgm-max", type=float, default=1.5)
    sp.set_defaults(func=cmd_duality)

    sp = sub.add_parser("energy", help="Loewner energy of an analytic curve")
    common(sp)
    sp.add_argument("--curve", default="example-leaf:1.0",
                    help="circle:r | offset:a,r | example-leaf:t")
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("isometry-check", help="isometry criterion standalone")
    common(sp)
    sp.set_defaults(func=cmd_isometry_check)

    sp = sub.add_parser("hadamard-check", help="Hadamard-formula residuals")
    common(sp)
    sp.add_argument("--t", type=float, default=0.3)
    sp.add_argument("--dt-fd", type=float, default=1e-4, dest="dt_fd")
    sp.add_argument("--pairs", type=int, default=20)
    sp.set_defaults(func=cmd_hadamard_check)

    sp = sub.add_parser("distort", help="conformal distortion identity")
    common(sp)
    sp.add_argument("--germ", default="mobius:0.15",
                    help="identity | rotation:a | mobius:a | poly:eps")
    sp.add_argument("--nt", type=int, default=21)
    sp.set_defaults(func=cmd_distort)

    sp = sub.add_parser("reverse", help="inversion/time-reversal energies")
    common(sp)
    sp.set_defaults(func=cmd_reverse)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    common(sp)
    sp.add_argument("--only", default="",
                    help="comma-separated criterion indices to run")
    sp.set_defaults(func=cmd_verify)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidMeasureError, ConfigurationError, FileNotFoundError,
            ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
