"""Output writers: CSV for chains and fields, SVG for leaves, 8-bit PGM
heatmaps, JSON-shaped reports, and matplotlib figures rendered alongside
the delimited output.

Every file embeds the run configuration echo and the package version, and
writers are deterministic: rerunning with an identical configuration gives
byte-identical delimited output.
"""

from __future__ import annotations

import json

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__

__all__ = [
    "config_echo",
    "write_chain_csv",
    "write_field_csv",
    "write_cylinder_csv",
    "write_table_csv",
    "write_leaves_svg",
    "write_pgm",
    "write_report_json",
    "save_field_figure",
    "save_leaves_figure",
    "save_trend_figure",
]


def config_echo(config):
    cfg = json.dumps(config or {}, sort_keys=True, default=str)
    return f"lkfoliate {__version__} config={cfg}"


def write_chain_csv(path, samples, config=None):
    """Chain samples as rows (t, theta, re_f, im_f)."""
    with open(path, "w") as fh:
        fh.write(f"# {config_echo(config)}\n")
        fh.write("t,theta,re_f,im_f\n")
        for cs in samples:
            n = cs.n
            theta = 2.0 * np.pi * np.arange(n) / n
            for j in range(n):
                fh.write(f"{cs.t:.12g},{theta[j]:.12g},"
                         f"{cs.boundary_f[j].real:.12g},{cs.boundary_f[j].imag:.12g}\n")


def write_field_csv(path, wf, config=None):
    """Winding field as rows (x, y, phi, tau, mask)."""
    phi = wf.phi
    tau = wf.tau
    with open(path, "w") as fh:
        fh.write(f"# {config_echo(config)}\n")
        fh.write("x,y,phi,tau,mask\n")
        for i, x in enumerate(phi.x):
            for j, y in enumerate(phi.y):
                m = 1 if phi.mask[i, j] else 0
                p = phi.values[i, j] if m else 0.0
                t = tau.values[i, j] if m else 0.0
                if not np.isfinite(t):
                    t = -1.0
                fh.write(f"{x:.12g},{y:.12g},{p:.12g},{t:.12g},{m}\n")


def write_cylinder_csv(path, cyl, config=None):
    """Cylinder function as rows (t, theta, u)."""
    n = cyl.n
    theta = 2.0 * np.pi * np.arange(n) / n
    with open(path, "w") as fh:
        fh.write(f"# {config_echo(config)}\n")
        fh.write("t,theta,u\n")
        for k, t in enumerate(cyl.times):
            for j in range(n):
                fh.write(f"{t:.12g},{theta[j]:.12g},{cyl.values[k, j]:.12g}\n")


def write_table_csv(path, header, rows, config=None):
    with open(path, "w") as fh:
        fh.write(f"# {config_echo(config)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def write_leaves_svg(path, foliation, config=None, size=640):
    """One SVG path element per leaf, viewBox set to the leaf bounding box."""
    pts = np.concatenate([leaf.points for leaf in foliation.leaves])
    pad = 0.05 * max(np.ptp(pts.real), np.ptp(pts.imag), 1e-9)
    x0, x1 = pts.real.min() - pad, pts.real.max() + pad
    y0, y1 = pts.imag.min() - pad, pts.imag.max() + pad
    w, h = x1 - x0, y1 - y0
    lines = [
        '<?xml version="1.0" standalone="no"?>',
        f"<!-- {config_echo(config)} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{x0:.6g} {y0:.6g} {w:.6g} {h:.6g}">',
    ]
    for leaf in foliation.leaves:
        d = "M " + " L ".join(f"{p.real:.6g} {-p.imag + y0 + y1:.6g}"
                              for p in leaf.points) + " Z"
        lines.append(f'<path d="{d}" fill="none" stroke="black" '
                     f'stroke-width="{w / 500:.6g}"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_pgm(path, field, vmin, vmax, config=None):
    """8-bit binary PGM heatmap with a fixed linear value range; values
    outside [vmin, vmax] are clamped, masked-out points map to 0."""
    vals = np.where(field.mask, field.values, vmin)
    scaled = np.clip((vals - vmin) / max(vmax - vmin, 1e-300), 0.0, 1.0)
    img = (scaled * 255.0).astype(np.uint8)
    # PGM rows scan top-to-bottom: flip y and transpose from (x, y) indexing
    img = img.T[::-1]
    header = f"P5\n# {config_echo(config)}\n{img.shape[1]} {img.shape[0]}\n255\n"
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(img.tobytes())


def write_report_json(path, report_dict, config=None):
    payload = dict(report_dict)
    payload["version"] = __version__
    if config is not None:
        payload.setdefault("config", config)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_safe)
        fh.write("\n")


def _json_safe(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    return str(obj)


def _savefig(fig, path, config):
    fig.savefig(path, dpi=130, metadata={"Software": config_echo(config)})
    plt.close(fig)


def save_field_figure(path, wf, config=None, title="winding field"):
    """Heatmap rendering of a winding field."""
    phi = wf.phi
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    data = np.where(phi.mask, phi.values, np.nan)
    im = ax.imshow(data.T, origin="lower",
                   extent=[phi.x[0], phi.x[-1], phi.y[0], phi.y[-1]],
                   cmap="magma")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    _savefig(fig, path, config)


def save_leaves_figure(path, foliation, config=None, title="foliation leaves"):
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    for leaf in foliation.leaves:
        closed = np.append(leaf.points, leaf.points[0])
        ax.plot(closed.real, closed.imag, lw=0.9)
    ax.set_aspect("equal")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    _savefig(fig, path, config)


def save_trend_figure(path, refinement, config=None):
    """Refinement trend of the duality ratio."""
    ms = [lv["m"] for lv in refinement]
    ratios = [lv["ratio"] for lv in refinement]
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.plot(ms, ratios, "o-", label="raw ratio")
    ax.axhline(16.0, color="k", ls="--", lw=0.8, label="16")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("grid points per axis")
    ax.set_ylabel("D / S")
    ax.legend()
    fig.tight_layout()
    _savefig(fig, path, config)
