"""Command-line entry point: solve, sweep, verify.

Exit codes: 0 success, 1 configuration or input error, 2 unconverged,
3 verification failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    AllUnconvergedError,
    FitResult,
    SweepRecord,
    energy,
    fit_loglinear,
    sweep,
)
from .geometry import (
    FullPlaneField,
    ScalarField,
    integrate,
    read_field_csv,
    support_stats,
    write_field_csv,
)
from .kernel import GreenOperator, velocity_from_stream
from .profiles import truncate
from .solver import (
    IterationState,
    SolutionBundle,
    SolverConfig,
    _candidate_update,
    solve,
    solve_multiplier,
)

_FMT = "%.17g"


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _config_digest(config: SolverConfig) -> str:
    return hashlib.sha256(_canonical_json(config.to_dict()).encode()).hexdigest()


def _write_manifest(out_dir: Path, config: SolverConfig, paths: list[Path]) -> None:
    outputs = []
    for p in sorted(paths):
        data = p.read_bytes()
        outputs.append(
            {
                "path": str(p.relative_to(out_dir)),
                "sha256": hashlib.sha256(data).hexdigest(),
                "bytes": len(data),
            }
        )
    manifest = {
        "config_digest": _config_digest(config),
        "artifact_version": __version__,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": outputs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_config(path: str) -> SolverConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return SolverConfig.from_dict(raw)


def _write_velocity_csv(bundle: SolutionBundle, path: Path) -> None:
    grid = bundle.config.grid
    v1, v2 = velocity_from_stream(bundle.stream)
    x1c, x2c = grid.center_mesh()
    table = np.column_stack([x1c.ravel(), x2c.ravel(), v1.ravel(), v2.ravel()])
    np.savetxt(path, table, fmt=_FMT, delimiter=",", header="x1,x2,v1,v2", comments="")


def _write_iterations_csv(bundle: SolutionBundle, path: Path) -> None:
    lines = ["iteration,rho,mu,mass,energy_E,residual"]
    for row in bundle.history:
        lines.append(
            f"{row.iteration},{row.rho:.17g},{row.multiplier:.17g},"
            f"{row.mass:.17g},{row.energy:.17g},{row.residual:.17g}"
        )
    path.write_text("\n".join(lines) + "\n")


def _write_solution_outputs(bundle: SolutionBundle, out_dir: Path, figures: bool) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    config = bundle.config
    written: list[Path] = []

    cfg_path = out_dir / "config.json"
    cfg_path.write_text(_canonical_json(config.to_dict()) + "\n")
    written.append(cfg_path)

    bundle_path = out_dir / "bundle.json"
    bundle_path.write_text(json.dumps(bundle.bundle_dict(), indent=2, sort_keys=True) + "\n")
    written.append(bundle_path)

    zeta_path = out_dir / "vorticity.csv"
    write_field_csv(bundle.state.vorticity, zeta_path)
    written.extend([zeta_path, zeta_path.with_name(zeta_path.name + ".meta.json")])

    psi_path = out_dir / "stream.csv"
    write_field_csv(bundle.stream, psi_path)
    written.extend([psi_path, psi_path.with_name(psi_path.name + ".meta.json")])

    vel_path = out_dir / "velocity.csv"
    _write_velocity_csv(bundle, vel_path)
    written.append(vel_path)

    full_path = out_dir / "vorticity_fullplane.csv"
    FullPlaneField(bundle.state.vorticity).write_csv(full_path)
    written.append(full_path)

    iter_path = out_dir / "iterations.csv"
    _write_iterations_csv(bundle, iter_path)
    written.append(iter_path)

    if figures:
        from . import report

        written.extend(report.render_solution_figures(bundle, out_dir / "figures"))
    _write_manifest(out_dir, config, written)
    return written


def cmd_solve(args) -> int:
    try:
        config = _load_config(args.config)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        bundle = solve(config)
    except RuntimeError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    _write_solution_outputs(bundle, Path(args.out), figures=not args.no_figures)
    if not bundle.converged:
        print("solve did not converge within max_iter", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# sweep


def _records_csv(records: list[SweepRecord], path: Path) -> None:
    lines = [
        "epsilon,lambda,mu,energy_E,core_energy_I,penalty_J,"
        "diameter,centroid_x1,centroid_x2,residual,converged"
    ]
    for rec in records:
        lines.append(
            f"{rec.epsilon:.17g},{rec.lambda_:.17g},{rec.mu:.17g},"
            f"{rec.energy_E:.17g},{rec.core_energy_I:.17g},{rec.penalty_J:.17g},"
            f"{rec.diameter:.17g},{rec.centroid[0]:.17g},{rec.centroid[1]:.17g},"
            f"{rec.residual:.17g},{str(rec.converged).lower()}"
        )
    path.write_text("\n".join(lines) + "\n")


def _fit_json(fit: FitResult, observable: str, expected: float, path: Path) -> None:
    doc = {
        "observable": observable,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "expected_slope": expected,
        "relative_error": abs(fit.slope - expected) / abs(expected),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_sweep(args) -> int:
    try:
        config = _load_config(args.config)
        epsilons = [float(tok) for tok in args.epsilons.split(",") if tok.strip()]
        if len(epsilons) < 3:
            raise ValueError("need at least 3 epsilons for the asymptotic fits")
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        records = sweep(config, epsilons)
    except AllUnconvergedError as exc:
        csv_path = out_dir / "sweep.csv"
        _records_csv(exc.records, csv_path)
        _write_manifest(out_dir, config, [csv_path])
        print("no sweep point converged; no fits produced", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError) as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return 1
    csv_path = out_dir / "sweep.csv"
    _records_csv(records, csv_path)
    written.append(csv_path)

    kappa = config.kappa
    expected = {
        "mu": kappa / (2.0 * math.pi),
        "energy_E": kappa * kappa / (4.0 * math.pi),
    }
    n_ok = sum(rec.converged for rec in records)
    fits: dict[str, tuple[FitResult | None, float]] = {}
    if n_ok >= 3:
        for observable, slope in expected.items():
            fit = fit_loglinear(records, observable)
            fit_path = out_dir / f"fit_{observable}.json"
            _fit_json(fit, observable, slope, fit_path)
            written.append(fit_path)
            fits[observable] = (fit, slope)
    if not args.no_figures:
        from . import report

        written.extend(
            report.render_sweep_figures(records, fits or {k: (None, v) for k, v in expected.items()}, out_dir / "figures")
        )
    _write_manifest(out_dir, config, written)
    if n_ok < 3:
        print("fewer than 3 converged points; no fits produced", file=sys.stderr)
        return 1
    return 0 if n_ok == len(records) else 2


# ---------------------------------------------------------------------------
# verify


def _check(rows: list, name: str, ok: bool, detail: str) -> bool:
    rows.append((name, bool(ok), detail))
    return bool(ok)


def cmd_verify(args) -> int:
    out_dir = Path(args.bundle)
    try:
        config = _load_config(out_dir / "config.json")
        with open(out_dir / "bundle.json", encoding="utf-8") as fh:
            stored = json.load(fh)
        zeta = read_field_csv(out_dir / "vorticity.csv")
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"unreadable bundle: {exc}", file=sys.stderr)
        return 1
    if zeta.grid != config.grid:
        print("field grid does not match the configured grid", file=sys.stderr)
        return 1

    kappa = config.kappa
    rho = stored.get("rho_final")
    active = truncate(config.profile, rho if rho is not None else config.rho_policy.rho)
    op = GreenOperator(config.grid)
    g_vals = op.apply(zeta.values)
    g_field = ScalarField(config.grid, g_vals, role="stream")
    mu = solve_multiplier(g_field, config, active)
    x1c, _ = config.grid.center_mesh()
    psi = g_vals - config.w_speed * x1c - mu
    mask = config.admissible_mask()

    state = IterationState(zeta, g_field, mu, 0.0, int(stored["iterations"]))
    _, partial, _, residual = _candidate_update(state, config, active, mask)

    rows: list = []
    mass = integrate(zeta)
    _check(rows, "mass-vs-bundle", abs(mass - stored["mass"]) <= 1e-12 * max(1.0, kappa),
           f"recomputed {mass!r} vs stored {stored['mass']!r}")
    _check(rows, "mass-budget", mass <= kappa * (1.0 + config.tol_mass),
           f"mass {mass!r} kappa {kappa!r}")
    _check(rows, "support-in-D", not np.any((zeta.values > 0) & ~mask),
           "no positive cells outside the box D")
    cap_ok = float(np.max(zeta.values)) * config.eps_sq <= active.sup_value
    _check(rows, "value-cap", cap_ok, "eps^2 * max vorticity <= sup of the profile")
    _check(rows, "mirror-symmetry", bool(np.array_equal(zeta.values, zeta.values[:, ::-1])),
           "bitwise even in x2")
    _check(rows, "multiplier", abs(mu - stored["mu"]) <= 1e-9 * max(1.0, abs(mu)),
           f"re-solved {mu!r} vs stored {stored['mu']!r}")
    resid_ok = abs(residual - stored["residual_L1"]) <= 1e-9 * kappa + 1e-15
    if stored["converged"]:
        resid_ok = resid_ok and residual <= config.tol_fixed_point * kappa
    _check(rows, "fixed-point-residual", resid_ok,
           f"recomputed {residual!r} vs stored {stored['residual_L1']!r}")

    core = mask & (zeta.values > 0.0) & ~partial
    if np.any(core):
        a = config.eps_sq * zeta.values[core]
        s = psi[core]
        gap = np.abs(np.asarray(active.conjugate(a)) + np.asarray(active.primitive(s)) - a * s)
        fen_ok = bool(np.all(gap <= 1e-8 * (1.0 + np.abs(a * s))))
        worst = float(np.max(gap))
    else:
        fen_ok, worst = True, 0.0
    _check(rows, "fenchel-identity", fen_ok, f"worst gap {worst:g}")

    outside = ~mask
    psi_out = float(np.max(psi[outside])) if np.any(outside) else -math.inf
    _check(rows, "stream-sign-outside-D", psi_out <= 1e-10,
           f"max stream outside D = {psi_out:g}")

    e_re = energy(zeta, config, rho=rho if rho is not None else None)
    _check(rows, "energy", abs(e_re - stored["energy_E"]) <= 1e-9 * max(1.0, abs(e_re)),
           f"recomputed {e_re!r} vs stored {stored['energy_E']!r}")
    area = config.grid.cell_area
    core_i = area * float(np.sum(zeta.values * psi))
    _check(rows, "core-energy", abs(core_i - stored["core_energy_I"]) <= 1e-9 * max(1.0, abs(core_i)),
           f"recomputed {core_i!r} vs stored {stored['core_energy_I']!r}")
    pen = config.lam * area * float(np.sum(np.asarray(active.conjugate(config.eps_sq * zeta.values))))
    _check(rows, "penalty", abs(pen - stored["penalty_J"]) <= 1e-9 * max(1.0, abs(pen)),
           f"recomputed {pen!r} vs stored {stored['penalty_J']!r}")
    ident = abs(2.0 * e_re - (core_i - config.w_speed * moment(zeta) - 2.0 * pen + mu * mass))
    _check(rows, "energy-identity", ident <= 1e-8 * max(1.0, abs(e_re)),
           f"defect {ident:g}")
    st = support_stats(zeta, rect=config.support_rect)
    sup_ok = (
        abs(st.diameter - stored["support"]["diameter"]) <= 1e-9 * max(1.0, st.diameter)
        and abs(st.centroid[0] - stored["support"]["centroid"][0]) <= 1e-9
        and abs(st.centroid[1] - stored["support"]["centroid"][1]) <= 1e-9
    )
    _check(rows, "support-stats", sup_ok, "diameter and centroid match the bundle")

    width = max(len(name) for name, _, _ in rows)
    all_ok = True
    for name, ok, detail in rows:
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return 0 if all_ok else 3


def moment(zeta: ScalarField) -> float:
    x1c, _ = zeta.grid.center_mesh()
    return zeta.grid.cell_area * float(np.sum(x1c * zeta.values))


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vortexpair",
        description="steady traveling vortex pairs by penalized energy maximization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one solve and export fields")
    p_solve.add_argument("--config", required=True, help="path to a JSON config")
    p_solve.add_argument("--out", required=True, help="output directory")
    p_solve.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_solve.set_defaults(fn=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="solve across epsilons and fit the laws")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--epsilons", required=True, help="comma-separated, decreasing")
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_verify = sub.add_parser("verify", help="recheck a stored solve from its files")
    p_verify.add_argument("--bundle", required=True, help="directory written by solve")
    p_verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
