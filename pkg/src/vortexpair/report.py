"""Figure rendering for solve and sweep outputs.

Figures are built directly on matplotlib Figure objects (no pyplot state)
and written as PNG files next to the delimited data they visualize.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .analysis import FitResult, SweepRecord
from .kernel import velocity_from_stream
from .solver import SolutionBundle

_DPI = 140


def _edges(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n + 1)


def _support_box(ax, rect: tuple[float, float, float, float]) -> None:
    lo1, hi1, lo2, hi2 = rect
    ax.add_patch(
        Rectangle((lo1, lo2), hi1 - lo1, hi2 - lo2, fill=False, ls="--", lw=1.0, ec="crimson")
    )


def render_fields_figure(bundle: SolutionBundle, path: Path) -> None:
    grid = bundle.config.grid
    e1 = _edges(grid.x1_min, grid.x1_max, grid.n1)
    e2 = _edges(grid.x2_min, grid.x2_max, grid.n2)
    fig = Figure(figsize=(11, 4.4))
    ax_z, ax_p = fig.subplots(1, 2)
    pc = ax_z.pcolormesh(e1, e2, bundle.state.vorticity.values.T, cmap="inferno")
    fig.colorbar(pc, ax=ax_z, label="vorticity")
    _support_box(ax_z, bundle.config.support_rect)
    ax_z.set_title(f"vorticity, eps={bundle.config.epsilon:g}")
    psi = bundle.stream.values.T
    levels = np.linspace(psi.min(), psi.max(), 21)
    x1c = grid.x1_centers
    x2c = grid.x2_centers
    cf = ax_p.contourf(x1c, x2c, psi, levels=levels, cmap="viridis")
    fig.colorbar(cf, ax=ax_p, label="relative stream")
    if psi.min() < 0.0 < psi.max():
        ax_p.contour(x1c, x2c, psi, levels=[0.0], colors="white", linewidths=1.2)
    _support_box(ax_p, bundle.config.support_rect)
    ax_p.set_title("relative stream (zero line in white)")
    for ax in (ax_z, ax_p):
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def render_fullplane_figure(bundle: SolutionBundle, path: Path) -> None:
    grid = bundle.config.grid
    vals = bundle.state.vorticity.values
    e1 = _edges(grid.x1_min, grid.x1_max, grid.n1)
    e2 = _edges(grid.x2_min, grid.x2_max, grid.n2)
    vmax = float(np.max(np.abs(vals))) or 1.0
    fig = Figure(figsize=(7.5, 4.2))
    ax = fig.subplots()
    kw = dict(cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    pc = ax.pcolormesh(e1, e2, vals.T, **kw)
    ax.pcolormesh(-e1[::-1], e2, -vals[::-1, :].T, **kw)
    fig.colorbar(pc, ax=ax, label="vorticity (odd extension)")
    ax.axvline(0.0, color="k", lw=0.6)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    ax.set_title("traveling pair, full plane")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def render_velocity_figure(bundle: SolutionBundle, path: Path) -> None:
    grid = bundle.config.grid
    v1, v2 = velocity_from_stream(bundle.stream)
    speed = np.hypot(v1, v2)
    e1 = _edges(grid.x1_min, grid.x1_max, grid.n1)
    e2 = _edges(grid.x2_min, grid.x2_max, grid.n2)
    fig = Figure(figsize=(6.8, 5.2))
    ax = fig.subplots()
    pc = ax.pcolormesh(e1, e2, speed.T, cmap="magma")
    fig.colorbar(pc, ax=ax, label="|v|")
    step = max(1, grid.n1 // 24, grid.n2 // 24)
    x1c, x2c = grid.center_mesh()
    sl = (slice(step // 2, None, step), slice(step // 2, None, step))
    ax.quiver(x1c[sl], x2c[sl], v1[sl], v2[sl], color="w", width=0.0022)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    ax.set_title("co-moving frame velocity")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def render_convergence_figure(bundle: SolutionBundle, path: Path) -> None:
    rows = bundle.history
    its = [row.iteration for row in rows]
    fig = Figure(figsize=(7.2, 4.2))
    ax = fig.subplots()
    resid = [row.residual for row in rows]
    finite = [(k, rv) for k, rv in zip(its, resid) if math.isfinite(rv) and rv > 0]
    if finite:
        ax.semilogy([k for k, _ in finite], [rv for _, rv in finite], "o-", ms=3, label="residual")
    ax.set_xlabel("iteration")
    ax.set_ylabel("fixed-point residual (L1)")
    ax2 = ax.twinx()
    ax2.plot(its, [row.energy for row in rows], "s--", ms=3, color="tab:orange", label="energy")
    ax2.set_ylabel("energy")
    ax.set_title(f"convergence ({'ok' if bundle.converged else 'max_iter hit'})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def render_solution_figures(bundle: SolutionBundle, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = {
        "fields.png": render_fields_figure,
        "fullplane.png": render_fullplane_figure,
        "velocity.png": render_velocity_figure,
        "convergence.png": render_convergence_figure,
    }
    written = []
    for name, fn in jobs.items():
        p = out_dir / name
        fn(bundle, p)
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# sweep figures


def _render_fit(
    records: list[SweepRecord],
    fit: FitResult | None,
    observable: str,
    expected_slope: float,
    path: Path,
) -> None:
    xs = [math.log(1.0 / rec.epsilon) for rec in records]
    ys = [getattr(rec, observable) for rec in records]
    ok = [rec.converged for rec in records]
    fig = Figure(figsize=(6.4, 4.4))
    ax = fig.subplots()
    ax.plot(
        [x for x, c in zip(xs, ok) if c], [y for y, c in zip(ys, ok) if c],
        "o", color="tab:blue", label="converged",
    )
    bad = [(x, y) for x, y, c in zip(xs, ys, ok) if not c]
    if bad:
        ax.plot(*zip(*bad), "x", color="tab:red", label="unconverged")
    if fit is not None:
        xe = np.linspace(min(xs), max(xs), 50)
        ax.plot(xe, fit.slope * xe + fit.intercept, "-", color="tab:blue", lw=1,
                label=f"fit slope {fit.slope:.4f}")
        ax.plot(xe, expected_slope * xe + fit.intercept, "--",
                color="gray", lw=1, label=f"law slope {expected_slope:.4f}")
    ax.set_xlabel("log(1/eps)")
    ax.set_ylabel(observable)
    ax.legend(fontsize=8)
    ax.set_title(f"{observable} against log(1/eps)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def render_support_scaling_figure(records: list[SweepRecord], path: Path) -> None:
    eps = [rec.epsilon for rec in records if rec.converged]
    diam = [rec.diameter for rec in records if rec.converged]
    fig = Figure(figsize=(6.0, 4.4))
    ax = fig.subplots()
    ax.loglog(eps, diam, "o-", label="support diameter")
    if eps:
        anchor = diam[0] / eps[0]
        ax.loglog(eps, [anchor * e for e in eps], "--", color="gray", label="slope 1 guide")
    ax.set_xlabel("eps")
    ax.set_ylabel("diameter")
    ax.legend(fontsize=8)
    ax.set_title("support size scaling")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)


def render_sweep_figures(
    records: list[SweepRecord],
    fits: dict[str, tuple[FitResult | None, float]],
    out_dir: Path,
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for observable, (fit, expected) in fits.items():
        p = out_dir / f"fit_{observable}.png"
        _render_fit(records, fit, observable, expected, p)
        written.append(p)
    p = out_dir / "support_scaling.png"
    render_support_scaling_figure(records, p)
    written.append(p)
    return written
