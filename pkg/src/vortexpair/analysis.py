"""Energy diagnostics, location functional, epsilon sweeps, and scaling fits.

Everything here re-derives its numbers from fields and configs rather than
trusting solver bookkeeping, so the tests can confront the two routes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import optimize

from .geometry import GridSpec, ScalarField, integrate, moment_x1
from .kernel import GreenOperator
from .profiles import truncate
from .solver import SolutionBundle, SolverConfig, solve


@lru_cache(maxsize=8)
def _op_for(grid: GridSpec) -> GreenOperator:
    return GreenOperator(grid)


# ---------------------------------------------------------------------------
# energy, re-derived


def energy(zeta: ScalarField, config: SolverConfig, rho: float | None = None) -> float:
    """Penalized energy of an arbitrary admissible field; -inf when the
    scaled values leave the conjugate's effective domain."""
    if rho is None:
        rho = config.rho_policy.rho
    active = truncate(config.profile, rho)
    op = _op_for(config.grid)
    vals = zeta.values
    quad = 0.5 * config.grid.cell_area * float(np.sum(vals * op.apply(vals)))
    lin = config.w_speed * moment_x1(zeta)
    pen_vals = np.asarray(active.conjugate(config.eps_sq * vals))
    if np.any(np.isinf(pen_vals)):
        return -math.inf
    pen = config.lam * config.grid.cell_area * float(np.sum(pen_vals))
    return quad - lin - pen


def core_energy(bundle: SolutionBundle) -> tuple[float, float]:
    """Kinetic-type core term (vorticity against its own relative stream)
    and the penalty term, both recomputed from the stored fields."""
    config = bundle.config
    area = config.grid.cell_area
    vals = bundle.state.vorticity.values
    core_i = area * float(np.sum(vals * bundle.stream.values))
    rho = bundle.rho_final if bundle.rho_final is not None else config.rho_policy.rho
    active = truncate(config.profile, rho)
    pen = config.lam * area * float(np.sum(np.asarray(active.conjugate(config.eps_sq * vals))))
    return core_i, pen


def energy_identity_gap(bundle: SolutionBundle) -> float:
    """Relative defect of 2E = I - W*m1 - 2*Jpen + mu*mass at the solution."""
    config = bundle.config
    m1 = moment_x1(bundle.state.vorticity)
    lhs = 2.0 * bundle.energy_E
    rhs = (
        bundle.core_energy_I
        - config.w_speed * m1
        - 2.0 * bundle.penalty_J
        + bundle.state.multiplier * bundle.mass
    )
    return abs(lhs - rhs) / max(1.0, abs(lhs))


# ---------------------------------------------------------------------------
# the pair's location functional


def kirchhoff_routh(t: float, kappa: float, w_speed: float) -> float:
    """Interaction-plus-drift cost of a pair at half-distance t."""
    if t <= 0:
        raise ValueError("half-distance must be positive")
    return (kappa * kappa / (4.0 * math.pi)) * math.log(1.0 / (2.0 * t)) + kappa * w_speed * t


def argmin_kirchhoff_routh(kappa: float, w_speed: float) -> float:
    """Numeric minimizer: coarse scan, golden-section, then a derivative
    root-find.  Function values alone pin a smooth minimum only to about
    sqrt(machine eps) relative; the slope is strictly increasing in t, so a
    bracketed root of it recovers full precision."""
    if kappa <= 0 or w_speed <= 0:
        raise ValueError("kappa and w_speed must be positive")
    ts = np.geomspace(1e-8, 1e8, 2001)
    vals = [kirchhoff_routh(float(t), kappa, w_speed) for t in ts]
    k = int(np.argmin(vals))
    k = min(max(k, 1), len(ts) - 2)
    result = optimize.minimize_scalar(
        kirchhoff_routh,
        bracket=(float(ts[k - 1]), float(ts[k]), float(ts[k + 1])),
        args=(kappa, w_speed),
        method="golden",
        options={"xtol": 1e-12},
    )
    x = float(result.x)

    def slope(t: float) -> float:
        return -kappa * kappa / (4.0 * math.pi * t) + kappa * w_speed

    lo, hi = 0.5 * x, 2.0 * x
    if slope(lo) < 0.0 < slope(hi):
        return float(optimize.brentq(slope, lo, hi, xtol=1e-300, rtol=8.9e-16))
    return x


def point_vortex_reference(kappa: float, r: float) -> tuple[float, dict]:
    """Drift speed and straight-line trajectories of the singular pair."""
    if kappa <= 0 or r <= 0:
        raise ValueError("kappa and r must be positive")
    w_speed = kappa / (4.0 * math.pi * r)
    description = {
        "centers": [[r, 0.0], [-r, 0.0]],
        "drift_velocity": [0.0, -w_speed],
        "note": "each center moves as center + t*drift_velocity",
    }
    return w_speed, description


# ---------------------------------------------------------------------------
# sweeps over epsilon


@dataclass(frozen=True)
class SweepRecord:
    epsilon: float
    lambda_: float
    mu: float
    energy_E: float
    core_energy_I: float
    penalty_J: float
    diameter: float
    centroid: tuple[float, float]
    residual: float
    converged: bool


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


class AllUnconvergedError(RuntimeError):
    """Every sweep point failed to converge; fits are impossible."""

    def __init__(self, records: list[SweepRecord]):
        super().__init__("no sweep point converged")
        self.records = records


def _record_from(bundle: SolutionBundle) -> SweepRecord:
    eps = bundle.config.epsilon
    return SweepRecord(
        epsilon=eps,
        lambda_=1.0 / (eps * eps),
        mu=bundle.state.multiplier,
        energy_E=bundle.energy_E,
        core_energy_I=bundle.core_energy_I,
        penalty_J=bundle.penalty_J,
        diameter=bundle.support.diameter,
        centroid=bundle.support.centroid,
        residual=bundle.residual_L1,
        converged=bundle.converged,
    )


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get("VPD_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def sweep(
    base_config: SolverConfig,
    epsilons: list[float],
    return_bundles: bool = False,
):
    """Solve once per epsilon (decreasing order) and collect observables."""
    eps = [float(e) for e in epsilons]
    if len(eps) == 0:
        raise ValueError("empty epsilon list")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly decreasing")
    configs = [replace(base_config, epsilon=e) for e in eps]
    workers = _worker_count(len(configs))
    if workers == 1:
        bundles = [solve(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            bundles = list(pool.map(solve, configs))
    records = [_record_from(b) for b in bundles]
    if not any(rec.converged for rec in records):
        raise AllUnconvergedError(records)
    if return_bundles:
        return records, bundles
    return records


def fit_loglinear(records: list[SweepRecord], observable: str) -> FitResult:
    """Least-squares line of an observable against log(1/epsilon)."""
    if observable not in ("mu", "energy_E"):
        raise ValueError(f"unsupported observable {observable!r}")
    used = [rec for rec in records if rec.converged]
    if len(used) < 3:
        raise ValueError("need at least 3 converged records to fit")
    x = np.array([math.log(1.0 / rec.epsilon) for rec in used])
    y = np.array([getattr(rec, observable) for rec in used])
    if np.ptp(x) == 0.0:
        raise ValueError("degenerate abscissae: all epsilons equal")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(float(slope), float(intercept), float(r_squared), len(used))


def multiplier_energy_offsets(records: list[SweepRecord], kappa: float) -> list[float]:
    """The per-record quantity mu - 2E/kappa whose boundedness the theory asserts."""
    return [rec.mu - 2.0 * rec.energy_E / kappa for rec in records if rec.converged]


# ---------------------------------------------------------------------------
# core shape diagnostics


def core_rescale(bundle: SolutionBundle) -> ScalarField:
    """Crop the support, recenter on the centroid, and blow lengths up by
    1/epsilon; values are scaled by epsilon^2 so the profile is order one."""
    config = bundle.config
    vals = bundle.state.vorticity.values
    pos = np.argwhere(vals > 0.0)
    if pos.size == 0:
        raise ValueError("empty support; nothing to rescale")
    grid = config.grid
    i0, j0 = pos.min(axis=0)
    i1, j1 = pos.max(axis=0) + 1
    i0 = max(0, i0 - 1)
    i1 = min(grid.n1, i1 + 1)
    # keep the column crop mirror-symmetric so the result stays even in x2
    j0 = max(0, min(j0 - 1, grid.n2 - j1 - 1))
    j1 = grid.n2 - j0
    sub = vals[i0:i1, j0:j1]
    c1, c2 = bundle.support.centroid
    eps = config.epsilon
    new_grid = GridSpec(
        (grid.x1_min + i0 * grid.h1 - c1) / eps,
        (grid.x1_min + i1 * grid.h1 - c1) / eps,
        (grid.x2_min + j0 * grid.h2 - c2) / eps,
        (grid.x2_min + j1 * grid.h2 - c2) / eps,
        int(i1 - i0),
        int(j1 - j0),
    )
    return ScalarField(new_grid, config.eps_sq * sub, role="vorticity")


def support_perimeter(field: ScalarField, threshold: float = 0.0) -> float:
    """Staircase perimeter of the positive set (exposed cell edges)."""
    m = field.values > threshold
    if not m.any():
        return 0.0
    g = field.grid
    pad = np.pad(m, 1, constant_values=False)
    exposed_x1 = np.count_nonzero(pad[1:, :] != pad[:-1, :])
    exposed_x2 = np.count_nonzero(pad[:, 1:] != pad[:, :-1])
    return exposed_x1 * g.h2 + exposed_x2 * g.h1


def core_shape(bundle: SolutionBundle) -> dict:
    """Aspect, isoperimetric ratio, and effective radius of the rescaled core."""
    rescaled = core_rescale(bundle)
    stats = bundle.support
    area = stats.area / (bundle.config.epsilon ** 2)
    perim = support_perimeter(rescaled)
    return {
        "aspect_ratio": stats.aspect_ratio,
        "isoperimetric_ratio": perim * perim / (4.0 * math.pi * area) if area > 0 else math.inf,
        "effective_radius": math.sqrt(area / math.pi),
    }
