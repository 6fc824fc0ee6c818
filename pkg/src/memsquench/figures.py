"""Matplotlib renderings of run outputs, written next to the CSV/JSON files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_run_figures",
    "render_comparison_figure",
    "render_sweep_figure",
    "render_convergence_figure",
]

_DPI = 140


def _save(fig, out_dir, name) -> str:
    # write-then-rename so a crashed render never leaves a truncated file
    path = str(out_dir / name)
    tmp = path + ".tmp"
    fig.savefig(tmp, dpi=_DPI, format="png")
    plt.close(fig)
    os.replace(tmp, path)
    return path


def render_run_figures(out_dir, trace, snapshots, envelope=None, delta1_lines=None):
    """Write the trace-evolution and profile figures for one run.

    ``envelope`` optionally overlays a power-law floor (C, p, label) on the
    gap profiles; ``delta1_lines`` is a dict of named horizontal levels for
    the A(t) panel.  Returns the list of file paths written.
    """
    paths = []

    t = np.array([rec.t for rec in trace])
    fig, axes = plt.subplots(2, 2, figsize=(9.0, 6.5))
    ax = axes[0, 0]
    ax.plot(t, [rec.sup_u for rec in trace], lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("sup u")
    ax.set_title("peak deflection")

    ax = axes[0, 1]
    ax.semilogy(t, [rec.gap for rec in trace], lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("1 - sup u")
    ax.set_title("gap to touchdown")

    ax = axes[1, 0]
    ax.plot(t, [rec.A for rec in trace], lw=1.2, label="A(t)")
    for name, level in (delta1_lines or {}).items():
        ax.axhline(level, ls="--", lw=1.0, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("A")
    ax.set_title("capacitance factor")
    ax.legend(fontsize=8)

    ax = axes[1, 1]
    steps = [rec.step for rec in trace[1:]]
    ax.semilogy(steps, [rec.dt for rec in trace[1:]], lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("dt")
    ax.set_title("accepted step sizes")

    fig.tight_layout()
    paths.append(_save(fig, out_dir, "fig_trace.png"))

    if not snapshots:
        return paths

    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    for t_snap, field in snapshots:
        ax0.plot(field.grid.r, field.values, lw=1.0, label=f"t={t_snap:.4g}")
    ax0.set_xlabel("r")
    ax0.set_ylabel("u")
    ax0.set_title("deflection profiles")
    if len(snapshots) <= 8:
        ax0.legend(fontsize=7)

    for t_snap, field in snapshots:
        r = field.grid.r
        v = 1.0 - field.values
        mask = (r > 0) & (v > 0)
        ax1.loglog(r[mask], v[mask], lw=1.0)
    if envelope is not None:
        C, p_exp, label = envelope
        r = snapshots[-1][1].grid.r
        r = r[r > 0]
        ax1.loglog(r, C * r**p_exp, "k--", lw=1.2, label=label)
        ax1.legend(fontsize=8)
    ax1.set_xlabel("r")
    ax1.set_ylabel("1 - u")
    ax1.set_title("gap profiles")

    fig.tight_layout()
    paths.append(_save(fig, out_dir, "fig_profiles.png"))
    return paths


def render_comparison_figure(out_dir, trace_a, trace_b):
    """Overlay the peak deflections of a lockstep pair."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    ax.plot([r.t for r in trace_a], [r.sup_u for r in trace_a], lw=1.2, label="run a")
    ax.plot([r.t for r in trace_b], [r.sup_u for r in trace_b], lw=1.2, ls="--", label="run b")
    ax.set_xlabel("t")
    ax.set_ylabel("sup u")
    ax.set_title("lockstep comparison")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return [_save(fig, out_dir, "fig_comparison.png")]


def _axis_extent(vals):
    lo, hi = min(vals), max(vals)
    if lo == hi:  # single-row or single-column sweeps still need area
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def render_sweep_figure(out_dir, lams, chis, quenched, t_hi):
    """Heatmap of the touchdown flag and time over the (lam, chi) grid."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9.5, 3.8))
    extent = [*_axis_extent(lams), *_axis_extent(chis)]

    im0 = ax0.imshow(
        quenched, origin="lower", aspect="auto", extent=extent, cmap="RdYlGn_r",
        vmin=0.0, vmax=1.0,
    )
    ax0.set_xlabel("lam")
    ax0.set_ylabel("chi")
    ax0.set_title("touchdown flag")
    fig.colorbar(im0, ax=ax0, shrink=0.85)

    masked = np.where(np.isfinite(t_hi), t_hi, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        logt = np.log10(masked)
    im1 = ax1.imshow(logt, origin="lower", aspect="auto", extent=extent, cmap="viridis")
    ax1.set_xlabel("lam")
    ax1.set_ylabel("chi")
    ax1.set_title("log10 touchdown time")
    fig.colorbar(im1, ax=ax1, shrink=0.85)

    fig.tight_layout()
    return [_save(fig, out_dir, "fig_sweep.png")]


def render_convergence_figure(out_dir, rows, orders):
    """Refinement study: |T(M) - T(2M)| against h with the observed order."""
    hs = [row[1] for row in rows]
    t_his = [row[3] for row in rows]
    diffs = [abs(a - b) for a, b in zip(t_his, t_his[1:])]

    fig, ax = plt.subplots(figsize=(4.8, 3.8))
    ax.loglog(hs[:-1], diffs, "o-", lw=1.2)
    if diffs:
        # reference slope-2 line through the first point
        href = np.array([hs[0], hs[-2]]) if len(hs) > 2 else np.array(hs[:1] * 2)
        ax.loglog(href, diffs[0] * (href / hs[0]) ** 2, "k--", lw=1.0, label="order 2")
        ax.legend(fontsize=8)
    ax.set_xlabel("h")
    ax.set_ylabel("|T(h) - T(h/2)|")
    order_txt = ", ".join(f"{o:.2f}" for o in orders)
    ax.set_title(f"touchdown-time refinement (order {order_txt})")

    fig.tight_layout()
    return [_save(fig, out_dir, "fig_convergence.png")]
