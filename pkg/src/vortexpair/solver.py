"""Variational solver for steady traveling vortex pairs.

The half-plane problem maximizes a penalized energy over vorticity fields
that are nonnegative, supported in the standoff box D = (r/2, 2r) x (-1, 1),
and carry at most kappa of circulation.  Each iteration solves the mass
multiplier by bisection, applies the profile update map, optionally applies
Steiner symmetrization across x2 = 0, and never decreases the energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    FloatArray,
    GridSpec,
    ScalarField,
    build_grid,
    integrate,
    support_stats,
    SupportStats,
)
from .kernel import GreenOperator
from .profiles import Profile, TruncatedProfile, make_profile, truncate

RHO_CAP = 2.0**20


class MultiplierBracketError(RuntimeError):
    """The multiplier bracket failed; window or epsilon is misconfigured."""


class EnergyDescentError(RuntimeError):
    """An iteration decreased the energy beyond roundoff tolerance."""


class TruncationCapError(RuntimeError):
    """The truncation level escalated past the cap.

    Raised when successive doublings never deactivate the truncation: the
    profile's tail grows too fast for the penalty to control.
    """


class MassMatchError(RuntimeError):
    """Partial-cell filling could not restore the circulation budget."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RhoPolicy:
    """Truncation-level policy: a fixed level, or doubling until inactive."""

    kind: str = "adaptive"
    rho: float = 1.0
    growth: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "adaptive"):
            raise ValueError(f"unknown rho_policy kind {self.kind!r}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("truncation level must be positive and finite")
        if self.kind == "adaptive" and not (self.growth > 1 and math.isfinite(self.growth)):
            raise ValueError("adaptive truncation needs a growth factor > 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RhoPolicy":
        kind = d.get("kind", "adaptive")
        rho = float(d.get("rho", d.get("rho_init", 1.0)))
        growth = float(d.get("growth", 2.0))
        extra = set(d) - {"kind", "rho", "rho_init", "growth"}
        if extra:
            raise ValueError(f"unknown rho_policy keys {sorted(extra)}")
        return cls(kind, rho, growth)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "rho": self.rho}
        if self.kind == "adaptive":
            d["growth"] = self.growth
        return d


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Full problem statement for one solve."""

    epsilon: float
    kappa: float
    w_speed: float
    r: float
    profile: Profile
    grid: GridSpec
    rho_policy: RhoPolicy = RhoPolicy()
    max_iter: int = 500
    tol_mass: float = 1e-10
    tol_fixed_point: float = 1e-9
    symmetrize_each_iteration: bool = True

    def __post_init__(self) -> None:
        for name in ("epsilon", "kappa", "w_speed", "r"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number")
        # translation speed locked to the pair half-distance: W = kappa/(4 pi r)
        if abs(4.0 * math.pi * self.r * self.w_speed - self.kappa) > 1e-9 * self.kappa:
            raise ValueError("w_speed and r are inconsistent with kappa/(4*pi*r)")
        if isinstance(self.profile, TruncatedProfile):
            raise ValueError("pass the base profile; truncation comes from rho_policy")
        g = self.grid
        if g.x1_min <= 0.0:
            raise ValueError("grid window must lie strictly inside x1 > 0")
        if g.x2_min != -g.x2_max:
            raise ValueError("grid window must be symmetric across x2 = 0")
        lo1, hi1, lo2, hi2 = self.support_rect
        if not (g.x1_min <= lo1 and hi1 <= g.x1_max and g.x2_min <= lo2 and hi2 <= g.x2_max):
            raise ValueError("grid window must contain the support box D")
        if not (self.max_iter >= 1):
            raise ValueError("max_iter must be at least 1")
        if not (self.tol_mass > 0 and self.tol_fixed_point > 0):
            raise ValueError("tolerances must be positive")
        n_mask = int(np.count_nonzero(self.admissible_mask()))
        if n_mask == 0:
            raise ValueError("no grid cells fall inside the support box D")
        trunc = truncate(self.profile, self.rho_policy.rho)
        cap = _cap_value(trunc.sup_value, self.epsilon)
        # capacity constraint: (sup f_rho / eps^2) |D| > kappa, on the discrete mask
        if not (cap * n_mask * g.cell_area > self.kappa):
            raise ValueError(
                "capacity constraint violated: (sup f_rho/eps^2)*|D| = "
                f"{cap * n_mask * g.cell_area:g} must exceed kappa = {self.kappa:g}"
            )

    # -- derived quantities ----------------------------------------------
    @property
    def eps_sq(self) -> float:
        return self.epsilon * self.epsilon

    @property
    def lam(self) -> float:
        """Penalization strength 1/eps^2."""
        return 1.0 / self.eps_sq

    @property
    def support_rect(self) -> tuple[float, float, float, float]:
        """The box D = (r/2, 2r) x (-1, 1) confining the vorticity."""
        return (0.5 * self.r, 2.0 * self.r, -1.0, 1.0)

    def admissible_mask(self) -> np.ndarray:
        """Boolean mask of cells whose centers lie inside D."""
        lo1, hi1, lo2, hi2 = self.support_rect
        x1c, x2c = self.grid.center_mesh()
        return (x1c > lo1) & (x1c < hi1) & (x2c > lo2) & (x2c < hi2)

    # -- construction ------------------------------------------------------
    @classmethod
    def create(
        cls,
        epsilon: float,
        kappa: float,
        profile: Profile,
        grid: GridSpec | None = None,
        w_speed: float | None = None,
        r: float | None = None,
        **kwargs,
    ) -> "SolverConfig":
        if r is None and w_speed is None:
            raise ValueError("provide w_speed or r")
        if r is None:
            r = kappa / (4.0 * math.pi * w_speed)
        if w_speed is None:
            w_speed = kappa / (4.0 * math.pi * r)
        if grid is None:
            grid = build_grid(r, 256, 256)
        return cls(epsilon, kappa, w_speed, r, profile, grid, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        known = {
            "epsilon", "kappa", "W", "r", "profile", "grid",
            "rho_policy", "tolerances", "max_iter", "symmetrize",
        }
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        for key in ("epsilon", "kappa", "profile", "grid"):
            if key not in d:
                raise ValueError(f"config is missing required key {key!r}")
        gd = d["grid"]
        extra_g = set(gd) - {"n1", "n2", "window"}
        if extra_g:
            raise ValueError(f"unknown grid keys {sorted(extra_g)}")
        kappa = float(d["kappa"])
        w_speed = float(d["W"]) if "W" in d else None
        r = float(d["r"]) if "r" in d else None
        if r is None and w_speed is None:
            raise ValueError("config needs W or r")
        if r is None:
            r = kappa / (4.0 * math.pi * w_speed)
        if w_speed is None:
            w_speed = kappa / (4.0 * math.pi * r)
        if "window" in gd:
            w = [float(v) for v in gd["window"]]
            if len(w) != 4:
                raise ValueError("grid window must be [x1_min, x1_max, x2_min, x2_max]")
            grid = GridSpec(w[0], w[1], w[2], w[3], int(gd["n1"]), int(gd["n2"]))
        else:
            grid = build_grid(r, int(gd["n1"]), int(gd["n2"]))
        tols = d.get("tolerances", {})
        extra_t = set(tols) - {"mass", "fixed_point"}
        if extra_t:
            raise ValueError(f"unknown tolerance keys {sorted(extra_t)}")
        return cls(
            epsilon=float(d["epsilon"]),
            kappa=kappa,
            w_speed=w_speed,
            r=r,
            profile=make_profile(d["profile"]),
            grid=grid,
            rho_policy=RhoPolicy.from_dict(d.get("rho_policy", {})),
            max_iter=int(d.get("max_iter", 500)),
            tol_mass=float(tols.get("mass", 1e-10)),
            tol_fixed_point=float(tols.get("fixed_point", 1e-9)),
            symmetrize_each_iteration=bool(d.get("symmetrize", True)),
        )

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "W": self.w_speed,
            "r": self.r,
            "profile": self.profile.to_dict(),
            "grid": {
                "n1": self.grid.n1,
                "n2": self.grid.n2,
                "window": list(self.grid.window()),
            },
            "rho_policy": self.rho_policy.to_dict(),
            "tolerances": {"mass": self.tol_mass, "fixed_point": self.tol_fixed_point},
            "max_iter": self.max_iter,
            "symmetrize": self.symmetrize_each_iteration,
        }


# ---------------------------------------------------------------------------
# iteration state


@dataclass(frozen=True, eq=False)
class IterationState:
    """One committed iterate: the field, its induced stream, and bookkeeping."""

    vorticity: ScalarField
    induced_stream: ScalarField
    multiplier: float
    energy: float
    iteration: int


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    rho: float
    multiplier: float
    mass: float
    energy: float
    residual: float


@dataclass(frozen=True, eq=False)
class SolutionBundle:
    """Converged (or flagged) solve output with all diagnostics."""

    state: IterationState
    stream: ScalarField
    energy_E: float
    core_energy_I: float
    penalty_J: float
    mass: float
    support: SupportStats
    residual_L1: float
    stream_outside_max: float
    rho_final: float | None
    iterations: int
    converged: bool
    config: SolverConfig
    history: tuple[HistoryRow, ...]
    partial_mask: np.ndarray

    def bundle_dict(self) -> dict:
        return {
            "mu": float(self.state.multiplier),
            "energy_E": float(self.energy_E),
            "core_energy_I": float(self.core_energy_I),
            "penalty_J": float(self.penalty_J),
            "mass": float(self.mass),
            "residual_L1": float(self.residual_L1),
            "support": {
                "diameter": float(self.support.diameter),
                "centroid": [float(c) for c in self.support.centroid],
                "dist_to_boundary": float(self.support.dist_to_boundary),
                "aspect_ratio": float(self.support.aspect_ratio),
            },
            "rho_final": None if self.rho_final is None else float(self.rho_final),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


# ---------------------------------------------------------------------------
# numeric helpers


def _cap_value(sup: float, epsilon: float) -> float:
    """Largest field value whose product with eps^2 stays at or below sup."""
    eps2 = epsilon * epsilon
    cap = sup / eps2
    while cap * eps2 > sup:
        cap = math.nextafter(cap, 0.0)
    return cap


def _energy_terms(
    config: SolverConfig, active: TruncatedProfile, zeta: FloatArray, g: FloatArray
) -> tuple[float, float, float]:
    """(quadratic, linear, penalty) pieces of the energy."""
    area = config.grid.cell_area
    x1c, _ = config.grid.center_mesh()
    quad = 0.5 * area * float(np.sum(zeta * g))
    lin = config.w_speed * area * float(np.sum(x1c * zeta))
    pen_vals = active.conjugate(config.eps_sq * zeta)
    pen = config.lam * area * float(np.sum(pen_vals))
    return quad, lin, pen


def _energy_value(
    config: SolverConfig, active: TruncatedProfile, zeta: FloatArray, g: FloatArray
) -> float:
    quad, lin, pen = _energy_terms(config, active, zeta, g)
    return quad - lin - pen


def _snap_to_jumps(arg: FloatArray, jumps: Sequence[float], mu: float) -> FloatArray:
    """Collapse arguments within roundoff of a jump onto the exact jump value.

    The multiplier lands bitwise on eta - d for heaviside (d = 0); for other
    jump locations one rounding may separate arg from d, so a tolerance of a
    few ulps keeps the marginal set detectable.
    """
    if not jumps:
        return arg
    out = arg.copy()
    for d in jumps:
        tol = 64.0 * np.finfo(np.float64).eps * max(1.0, abs(d), abs(mu))
        sel = np.abs(arg - d) <= tol
        if np.any(sel):
            out[sel] = d
    return out


# ---------------------------------------------------------------------------
# multiplier


def tau(
    g_zeta: ScalarField,
    w_speed: float,
    t: float,
    epsilon: float,
    profile: Profile,
    mask: np.ndarray | None = None,
) -> float:
    """Mass the update map would deposit at shift t; nondecreasing in t."""
    grid = g_zeta.grid
    x1c, _ = grid.center_mesh()
    arg = g_zeta.values - w_speed * x1c + t
    if mask is not None:
        arg = arg[mask]
    vals = np.asarray(profile.value(arg)) / (epsilon * epsilon)
    cap = _cap_value(profile.sup_value, epsilon)
    np.minimum(vals, cap, out=vals)
    return float(grid.cell_area * np.sum(vals))


def solve_multiplier(
    g_zeta: ScalarField,
    config: SolverConfig,
    active: TruncatedProfile | None = None,
    mask: np.ndarray | None = None,
) -> float:
    """Smallest mu >= 0 bringing the update mass to the circulation budget.

    Bisection on the a-priori bracket [0, (kappa/2pi) log(1/eps) + 10]; for
    profiles with jumps the final mu snaps to the exact level eta - d that
    crosses the budget, so the marginal cells sit exactly on the jump.
    """
    if active is None:
        active = truncate(config.profile, config.rho_policy.rho)
    if mask is None:
        mask = config.admissible_mask()
    kappa = config.kappa

    # bitwise equal to tau(g_zeta, W, -mu, eps, active, mask) with the
    # mask applied up front, so the bracket is evaluated once per level
    grid = g_zeta.grid
    x1c, _ = grid.center_mesh()
    base = (g_zeta.values - config.w_speed * x1c)[mask]
    eps_sq = config.epsilon * config.epsilon
    cap = _cap_value(active.sup_value, config.epsilon)
    area = grid.cell_area

    def mass_at(mu: float) -> float:
        vals = np.asarray(active.value(base - mu)) / eps_sq
        np.minimum(vals, cap, out=vals)
        return float(area * np.sum(vals))

    if mass_at(0.0) <= kappa:
        return 0.0
    mu_max = (kappa / (2.0 * math.pi)) * math.log(1.0 / config.epsilon) + 10.0
    if mass_at(mu_max) > kappa:
        raise MultiplierBracketError(
            f"update mass at mu_max={mu_max:g} still exceeds kappa={kappa:g}; "
            "the window or epsilon is misconfigured"
        )
    # Bisect to float resolution, not just the nominal width: for continuous
    # profiles the linear part of the ascent identity loses mu * |mass - kappa|,
    # so the mass match must be driven to rounding level for the energy to be
    # monotone within tolerance.  For profiles with jumps the bracket pins the
    # jump level and partial fill restores the mass downstream.
    lo, hi = 0.0, mu_max
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mass_at(mid) > kappa:
            lo = mid
        else:
            hi = mid
    jumps = active.discontinuities()
    if jumps:
        width = hi - lo
        cands: list[float] = []
        for d in jumps:
            c = base - d
            sel = (c > lo - width) & (c <= hi + width)
            cands.extend(float(v) for v in np.unique(c[sel]))
        for c in sorted(set(cands)):
            if c >= 0.0 and mass_at(c) <= kappa:
                return c
    return hi


# ---------------------------------------------------------------------------
# the update map


def _apply_update(
    config: SolverConfig,
    active: TruncatedProfile,
    eta: FloatArray,
    mu: float,
    mask: np.ndarray,
) -> tuple[FloatArray, np.ndarray]:
    """Evaluate the update field (1/eps^2) f_rho(eta - mu) with partial fill.

    Marginal cells (argument exactly on a jump of f_rho) take the lower
    branch; any circulation deficit is split equally among them, capped by
    the jump height.  Returns the new values and the marginal-cell mask.
    """
    grid = config.grid
    area = grid.cell_area
    eps_sq = config.eps_sq
    cap = _cap_value(active.sup_value, config.epsilon)
    arg = np.where(mask, eta - mu, -np.inf)
    arg = _snap_to_jumps(arg, active.discontinuities(), mu)
    # same per-cell arithmetic as tau() so the bisection's mass guarantee
    # transfers bitwise to the low branch here
    low = np.asarray(active.value(arg)) / eps_sq
    np.minimum(low, cap, out=low)
    low[~mask] = 0.0
    partial = np.zeros_like(mask)
    if mu > 0.0:
        high = np.asarray(active.value_right(arg)) / eps_sq
        np.minimum(high, cap, out=high)
        high[~mask] = 0.0
        partial = mask & (high > low)
        deficit = config.kappa - area * float(np.sum(low[mask]))
        if deficit < -config.tol_mass * config.kappa:
            raise MassMatchError("update mass exceeds kappa at the solved multiplier")
        deficit = max(deficit, 0.0)
        n_tie = int(np.count_nonzero(partial))
        if n_tie > 0 and deficit > 0.0:
            share = deficit / n_tie / area
            fill = np.minimum(low[partial] + share, high[partial])
            out = low.copy()
            out[partial] = fill
            low = out
        mass = area * float(np.sum(low))
        if abs(mass - config.kappa) > config.tol_mass * config.kappa:
            raise MassMatchError(
                f"mass {mass!r} missed kappa {config.kappa!r} beyond tolerance "
                f"({n_tie} marginal cells)"
            )
    return low, partial


def _candidate_update(
    state: IterationState,
    config: SolverConfig,
    active: TruncatedProfile,
    mask: np.ndarray,
) -> tuple[FloatArray, np.ndarray, float, float]:
    """Update field, marginal mask, multiplier, and fixed-point residual."""
    x1c, _ = config.grid.center_mesh()
    eta = state.induced_stream.values - config.w_speed * x1c
    mu = solve_multiplier(state.induced_stream, config, active, mask)
    new_vals, partial = _apply_update(config, active, eta, mu, mask)
    diff = np.abs(state.vorticity.values - new_vals)
    diff[partial] = 0.0
    residual = config.grid.cell_area * float(np.sum(diff))
    return new_vals, partial, mu, residual


def steiner_symmetrize(zeta: ScalarField) -> ScalarField:
    """Per-column symmetric-decreasing rearrangement about x2 = 0.

    Sorted descending, values go alternately to the innermost free cell on
    the +x2 side then the -x2 side; column mass and the value multiset are
    preserved exactly.
    """
    n2 = zeta.grid.n2
    vals = zeta.values
    order = np.sort(vals, axis=1)[:, ::-1]
    k = np.arange(n2)
    dest = np.where(k % 2 == 0, n2 // 2 + k // 2, n2 // 2 - 1 - k // 2)
    out = np.empty_like(vals)
    out[:, dest] = order
    return zeta.with_values(out)


def _check_ascent(e_prev: float, e_next: float, where: str) -> None:
    if e_next < e_prev - 1e-12 * max(1.0, abs(e_prev)):
        raise EnergyDescentError(
            f"energy fell from {e_prev!r} to {e_next!r} during {where}"
        )


def _check_even(vals: FloatArray) -> None:
    if not np.array_equal(vals, vals[:, ::-1]):
        raise AssertionError("vorticity lost its x2 mirror symmetry")


def relaxation_step(
    state: IterationState,
    config: SolverConfig,
    active: TruncatedProfile | None = None,
    op: GreenOperator | None = None,
) -> IterationState:
    """One multiplier solve plus update-map application; energy never drops."""
    if active is None:
        active = truncate(config.profile, config.rho_policy.rho)
    if op is None:
        op = GreenOperator(config.grid)
    mask = config.admissible_mask()
    new_vals, _, mu, _ = _candidate_update(state, config, active, mask)
    zeta = ScalarField(config.grid, new_vals, role="vorticity")
    g = ScalarField(config.grid, op.apply(new_vals), role="stream")
    energy = _energy_value(config, active, zeta.values, g.values)
    _check_ascent(state.energy, energy, "the relaxation update")
    return IterationState(zeta, g, mu, energy, state.iteration + 1)


# ---------------------------------------------------------------------------
# initialization


def initialize(
    config: SolverConfig,
    active: TruncatedProfile | None = None,
    op: GreenOperator | None = None,
) -> IterationState:
    """Half-saturated disk of circulation kappa centered at (r, 0)."""
    if active is None:
        active = truncate(config.profile, config.rho_policy.rho)
    if op is None:
        op = GreenOperator(config.grid)
    sup = active.sup_value
    radius = config.epsilon * math.sqrt(2.0 * config.kappa / (math.pi * sup))
    lo1, hi1, lo2, hi2 = config.support_rect
    center = (config.r, 0.0)
    if not (
        center[0] - radius > lo1
        and center[0] + radius < hi1
        and center[1] - radius > lo2
        and center[1] + radius < hi2
    ):
        raise ValueError("initial disk does not fit inside D; epsilon too large")
    x1c, x2c = config.grid.center_mesh()
    inside = (x1c - center[0]) ** 2 + (x2c - center[1]) ** 2 < radius * radius
    n_in = int(np.count_nonzero(inside))
    if n_in == 0:
        raise ValueError("initial disk covers no cell centers; grid too coarse")
    v0 = 0.5 * sup / config.eps_sq
    scale = config.kappa / (v0 * config.grid.cell_area * n_in)
    value = v0 * scale
    if value > _cap_value(sup, config.epsilon):
        raise ValueError("initial disk is too coarse to rescale admissibly")
    vals = np.where(inside, value, 0.0)
    zeta = ScalarField(config.grid, vals, role="vorticity")
    g = ScalarField(config.grid, op.apply(vals), role="stream")
    energy = _energy_value(config, active, vals, g.values)
    return IterationState(zeta, g, 0.0, energy, 0)


# ---------------------------------------------------------------------------
# residual and stream diagnostics


def _stream_values(state: IterationState, config: SolverConfig) -> FloatArray:
    x1c, _ = config.grid.center_mesh()
    return state.induced_stream.values - config.w_speed * x1c - state.multiplier


def residual_l1(bundle: "SolutionBundle", config: SolverConfig | None = None) -> float:
    """Window L1 mismatch between the field and its own update image.

    Marginal (partially filled) cells are excluded: the update is set-valued
    there.  Uses the bundle's stored stream and multiplier.
    """
    if config is None:
        config = bundle.config
    active = truncate(config.profile, bundle.rho_final if bundle.rho_final else config.rho_policy.rho)
    mask = config.admissible_mask()
    state = bundle.state
    new_vals, partial, _, _ = _candidate_update(state, config, active, mask)
    diff = np.abs(state.vorticity.values - new_vals)
    diff[partial] = 0.0
    return config.grid.cell_area * float(np.sum(diff))


def stream_outside_violation(bundle: "SolutionBundle", config: SolverConfig | None = None) -> float:
    """Largest stream value on window cells outside D (-inf when D fills it)."""
    if config is None:
        config = bundle.config
    outside = ~config.admissible_mask()
    if not np.any(outside):
        return -math.inf
    return float(np.max(bundle.stream.values[outside]))


# ---------------------------------------------------------------------------
# the solve loop


def solve(
    config: SolverConfig,
    on_iteration: Callable[[IterationState], None] | None = None,
) -> SolutionBundle:
    """Run the full ascent loop, growing the truncation level as needed."""
    op = GreenOperator(config.grid)
    mask = config.admissible_mask()
    area = config.grid.cell_area
    rho = config.rho_policy.rho
    active = truncate(config.profile, rho)
    state = initialize(config, active, op)
    if on_iteration is not None:
        on_iteration(state)
    history: list[HistoryRow] = [
        HistoryRow(0, rho, 0.0, integrate(state.vorticity), state.energy, math.inf)
    ]
    converged = False
    final_mu = 0.0
    while state.iteration < config.max_iter:
        new_vals, partial, mu, residual = _candidate_update(state, config, active, mask)
        if residual <= config.tol_fixed_point * config.kappa:
            converged = True
            final_mu = mu
            # adaptive policy: converged with the update map still clipping
            # at rho means the level must grow and the loop continue
            if config.rho_policy.kind == "adaptive":
                psi_max = float(np.max(
                    state.induced_stream.values - config.w_speed * config.grid.center_mesh()[0] - mu
                ))
                if psi_max >= rho:
                    rho *= config.rho_policy.growth
                    if rho > RHO_CAP:
                        raise TruncationCapError(
                            "truncation level escalated past the cap; the profile "
                            "tail outruns the penalty's growth threshold"
                        )
                    active = truncate(config.profile, rho)
                    converged = False
                    continue
            break
        zeta = ScalarField(config.grid, new_vals, role="vorticity")
        g_vals = op.apply(new_vals)
        energy = _energy_value(config, active, new_vals, g_vals)
        _check_ascent(state.energy, energy, "the relaxation update")
        if config.symmetrize_each_iteration:
            sym = steiner_symmetrize(zeta)
            if not np.array_equal(sym.values, zeta.values):
                zeta = sym
                g_vals = op.apply(zeta.values)
                energy_sym = _energy_value(config, active, zeta.values, g_vals)
                _check_ascent(energy, energy_sym, "symmetrization")
                energy = energy_sym
        _check_even(zeta.values)
        mass = integrate(zeta)
        if mass > config.kappa * (1.0 + config.tol_mass):
            raise MassMatchError(f"mass {mass!r} exceeds the admissible budget")
        state = IterationState(
            zeta,
            ScalarField(config.grid, g_vals, role="stream"),
            mu,
            energy,
            state.iteration + 1,
        )
        final_mu = mu
        history.append(HistoryRow(state.iteration, rho, mu, mass, energy, residual))
        if on_iteration is not None:
            on_iteration(state)

    state = replace(state, multiplier=final_mu)
    stream = ScalarField(config.grid, _stream_values(state, config), role="stream")
    zeta_vals = state.vorticity.values
    mass = integrate(state.vorticity)
    _, _, pen = _energy_terms(config, active, zeta_vals, state.induced_stream.values)
    core_i = float(area * np.sum(zeta_vals * stream.values))
    _, partial, _, residual = _candidate_update(state, config, active, mask)
    outside = ~mask
    outside_max = float(np.max(stream.values[outside])) if np.any(outside) else -math.inf
    base_sup = config.profile.sup_value
    vacuous = math.isfinite(base_sup) and active.sup_value == base_sup
    bundle = SolutionBundle(
        state=state,
        stream=stream,
        energy_E=state.energy,
        core_energy_I=core_i,
        penalty_J=pen,
        mass=mass,
        support=support_stats(state.vorticity, rect=config.support_rect),
        residual_L1=residual,
        stream_outside_max=outside_max,
        rho_final=None if vacuous else rho,
        iterations=state.iteration,
        converged=converged,
        config=config,
        history=tuple(history),
        partial_mask=partial,
    )
    return bundle
