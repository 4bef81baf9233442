"""Vorticity profile functions and their convex machinery.

A profile is a nondecreasing function f with f(s) = 0 for s <= 0 and
f(s) > 0 for s > 0.  Alongside f the solver needs its primitive
F(s) = integral of f from 0 to s and the convex conjugate
J(a) = sup_t (a*t - F(t)), with +inf as a first-class value.  The upper
truncation f_rho (freeze f above the level rho) keeps the same interface.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import FloatArray

ArrayLike = Union[float, FloatArray]


def _eval(fn, s: ArrayLike):
    """Apply an array function, returning a scalar for scalar input."""
    arr = np.asarray(s, dtype=np.float64)
    out = np.asarray(fn(np.atleast_1d(arr)), dtype=np.float64)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


class Profile:
    """Interface shared by all profile kinds; subclasses implement _value etc."""

    kind: str = "generic"

    # -- pointwise maps -------------------------------------------------
    def value(self, s: ArrayLike) -> ArrayLike:
        """f(s); zero for s <= 0, monotone nondecreasing."""
        return _eval(self._value, s)

    def value_right(self, s: ArrayLike) -> ArrayLike:
        """Right limit f(s+); differs from value(s) only at jump points."""
        return _eval(self._value_right, s)

    def primitive(self, s: ArrayLike) -> ArrayLike:
        """F(s) = integral of f over [0, s]; zero for s <= 0."""
        return _eval(self._primitive, s)

    def conjugate(self, a: ArrayLike) -> ArrayLike:
        """Convex conjugate J(a) = sup_t (a*t - F(t)); +inf outside [0, sup f]."""
        return _eval(self._conjugate, a)

    # -- structure -------------------------------------------------------
    @property
    def sup_value(self) -> float:
        """sup of f over the reals (may be +inf)."""
        raise NotImplementedError

    def discontinuities(self) -> tuple[float, ...]:
        """Jump locations of f, in increasing order."""
        return ()

    def _value(self, s: FloatArray) -> FloatArray:
        raise NotImplementedError

    def _value_right(self, s: FloatArray) -> FloatArray:
        return self._value(s)

    def _primitive(self, s: FloatArray) -> FloatArray:
        raise NotImplementedError

    def _conjugate(self, a: FloatArray) -> FloatArray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Heaviside(Profile):
    """Step profile: f = 1 on {s > 0}, the patch-vorticity model."""

    kind = "heaviside"

    @property
    def sup_value(self) -> float:
        return 1.0

    def discontinuities(self) -> tuple[float, ...]:
        return (0.0,)

    def _value(self, s):
        return (s > 0.0).astype(np.float64)

    def _value_right(self, s):
        return (s >= 0.0).astype(np.float64)

    def _primitive(self, s):
        return np.maximum(s, 0.0)

    def _conjugate(self, a):
        out = np.zeros_like(a)
        out[(a < 0.0) | (a > 1.0)] = np.inf
        return out

    def to_dict(self) -> dict:
        return {"kind": "heaviside"}


@dataclass(frozen=True)
class Power(Profile):
    """Power profile f(s) = max(s, 0)**p for an exponent p > 0."""

    p: float

    kind = "power"

    def __post_init__(self) -> None:
        if not (self.p > 0 and math.isfinite(self.p)):
            raise ValueError("power profile needs a finite exponent p > 0")

    @property
    def sup_value(self) -> float:
        return math.inf

    def _value(self, s):
        m = np.maximum(s, 0.0)
        if self.p == 1.0:
            return m
        if self.p == 2.0:
            return m * m
        return m ** self.p

    def _primitive(self, s):
        m = np.maximum(s, 0.0)
        if self.p == 1.0:
            return 0.5 * m * m
        if self.p == 2.0:
            return m * m * m / 3.0
        q = self.p + 1.0
        return m ** q / q

    def _conjugate(self, a):
        # interior supremum at t = a**(1/p); negative arguments are infeasible
        m = np.maximum(a, 0.0)
        if self.p == 1.0:
            out = 0.5 * m * m
        elif self.p == 2.0:
            out = (2.0 / 3.0) * m * np.sqrt(m)
        else:
            with np.errstate(invalid="ignore"):
                out = (self.p / (self.p + 1.0)) * m ** ((self.p + 1.0) / self.p)
        out = np.where(np.asarray(a) < 0.0, np.inf, out)
        return out

    def to_dict(self) -> dict:
        return {"kind": "power", "p": self.p}


@dataclass(frozen=True, eq=False)
class Tabulated(Profile):
    """Profile interpolated from sampled (s, f(s)) nodes.

    Nodes must be nondecreasing in both columns with s >= 0.  A node (0, 0)
    is prepended when missing.  Repeated s values encode a jump; at a jump
    point value() returns the lower branch.  Beyond the last node f stays
    constant, so tabulated profiles are bounded.
    """

    s_nodes: FloatArray
    f_nodes: FloatArray
    table_path: str | None = None

    kind = "tabulated"

    def __post_init__(self) -> None:
        s = np.asarray(self.s_nodes, dtype=np.float64)
        f = np.asarray(self.f_nodes, dtype=np.float64)
        if s.ndim != 1 or s.shape != f.shape or s.size < 1:
            raise ValueError("tabulated profile needs matching 1-d node arrays")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(f))):
            raise ValueError("tabulated nodes must be finite")
        if s[0] < 0.0:
            raise ValueError("tabulated profile nodes must have s >= 0")
        if np.any(np.diff(s) < 0.0):
            raise ValueError("tabulated s nodes must be nondecreasing")
        if np.any(np.diff(f) < 0.0):
            raise ValueError("tabulated profile must be nondecreasing in f")
        if f[0] < 0.0:
            raise ValueError("tabulated profile values must be nonnegative")
        if not (s[0] == 0.0 and f[0] == 0.0):
            s = np.concatenate([[0.0], s])
            f = np.concatenate([[0.0], f])
        for name, arr in (("s_nodes", s), ("f_nodes", f)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        # exact primitive at the nodes: f is piecewise linear between them
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(s))])
        cum.setflags(write=False)
        object.__setattr__(self, "_cum_primitive", cum)

    @classmethod
    def from_csv(cls, path: str | Path) -> "Tabulated":
        """Load a two-column CSV of (s, f(s)) samples; header row optional."""
        path = Path(path)
        rows: list[tuple[float, float]] = []
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or not row[0].strip():
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if rows:
                        raise ValueError(f"{path}: malformed row {row!r}")
                    continue  # header line
        if not rows:
            raise ValueError(f"{path}: no data rows")
        s, f = np.array(rows, dtype=np.float64).T
        return cls(s, f, table_path=str(path))

    @property
    def sup_value(self) -> float:
        return float(self.f_nodes[-1])

    def discontinuities(self) -> tuple[float, ...]:
        s, f = self.s_nodes, self.f_nodes
        jumps = [float(s[k]) for k in range(len(s) - 1) if s[k + 1] == s[k] and f[k + 1] > f[k]]
        return tuple(dict.fromkeys(jumps))

    def _value(self, s):
        return self._interp(s, upper=False)

    def _value_right(self, s):
        return self._interp(s, upper=True)

    def _interp(self, s: FloatArray, upper: bool) -> FloatArray:
        sn, fn = self.s_nodes, self.f_nodes
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        out = np.empty_like(s)
        idx = np.searchsorted(sn, s, side="right" if upper else "left")
        below = idx == 0 if not upper else s < sn[0]
        above = idx >= len(sn)
        exact = (~above) & (~below) & (sn[np.minimum(idx, len(sn) - 1)] == s) if not upper else np.zeros_like(below)
        out[below] = 0.0
        out[above] = fn[-1]
        if not upper:
            out[exact] = fn[idx[exact]]
            mid = (~below) & (~above) & (~exact)
        else:
            # side="right": sn[idx-1] <= s < sn[idx]; value on [sn[idx-1], sn[idx])
            mid = (~below) & (~above)
        if mid.any():
            i = idx[mid]
            s0, s1 = sn[i - 1], sn[i]
            f0, f1 = fn[i - 1], fn[i]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(s1 > s0, (s[mid] - s0) / np.where(s1 > s0, s1 - s0, 1.0), 0.0)
            out[mid] = f0 + t * (f1 - f0)
        return out.reshape(np.shape(s))

    def _primitive(self, s):
        sn, fn, cum = self.s_nodes, self.f_nodes, self._cum_primitive
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        sc = np.clip(s, 0.0, None)
        idx = np.clip(np.searchsorted(sn, sc, side="right") - 1, 0, len(sn) - 1)
        base = cum[idx]
        s0 = sn[idx]
        f0 = fn[idx]
        dt = sc - s0
        nxt = np.minimum(idx + 1, len(sn) - 1)
        ds = sn[nxt] - s0
        df = fn[nxt] - f0
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(ds > 0, df / np.where(ds > 0, ds, 1.0), 0.0)
        inside = idx < len(sn) - 1
        # beyond the last node f is constant fn[-1]
        seg = np.where(inside, f0 * dt + 0.5 * slope * dt * dt, fn[-1] * dt)
        return (base + seg).reshape(np.shape(s))

    def _rightmost_level(self, a: FloatArray) -> FloatArray:
        """Largest t with f(t) <= a, for 0 <= a <= sup f (generalized inverse)."""
        sn, fn = self.s_nodes, self.f_nodes
        j = np.searchsorted(fn, a, side="right") - 1  # fn[j] <= a < fn[j+1]
        j = np.clip(j, 0, len(fn) - 1)
        at_top = j >= len(fn) - 1
        s0 = sn[j]
        s1 = sn[np.minimum(j + 1, len(sn) - 1)]
        f0 = fn[j]
        f1 = fn[np.minimum(j + 1, len(fn) - 1)]
        ds = s1 - s0
        df = f1 - f0
        with np.errstate(divide="ignore", invalid="ignore"):
            lin = s0 + np.where(df > 0, (a - f0) * ds / np.where(df > 0, df, 1.0), ds)
        t = np.where(df > 0, lin, s1)  # plateaus: rightmost end of the segment
        t = np.where(ds == 0, s0, t)   # jumps: the jump point itself
        return np.where(at_top, sn[-1], t)

    def _conjugate(self, a):
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        sup = self.sup_value
        out = np.full_like(a, np.inf)
        ok = (a >= 0.0) & (a <= sup)
        if ok.any():
            t = self._rightmost_level(a[ok])
            out[ok] = a[ok] * t - self._primitive(t)
        return out.reshape(np.shape(a))

    def to_dict(self) -> dict:
        d: dict = {"kind": "tabulated"}
        if self.table_path is not None:
            d["table_path"] = self.table_path
        else:
            d["s_nodes"] = [float(v) for v in self.s_nodes]
            d["f_nodes"] = [float(v) for v in self.f_nodes]
        return d


@dataclass(frozen=True, eq=False)
class TruncatedProfile(Profile):
    """Upper truncation f_rho: follow f up to the level rho, freeze above.

    f_rho(s) = f(s) for s <= rho and f(rho) for s > rho, so the primitive
    continues linearly with slope f(rho) and the conjugate agrees with the
    base conjugate on [0, f(rho)] and is +inf beyond.
    """

    base: Profile
    rho: float

    kind = "truncated"

    def __post_init__(self) -> None:
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError("truncation level rho must be positive and finite")
        if isinstance(self.base, TruncatedProfile):
            raise ValueError("do not truncate an already truncated profile")

    @property
    def sup_value(self) -> float:
        return float(self.base.value(self.rho))

    def discontinuities(self) -> tuple[float, ...]:
        return tuple(d for d in self.base.discontinuities() if d < self.rho)

    def _value(self, s):
        return self.base._value(np.minimum(s, self.rho))

    def _value_right(self, s):
        sup = self.sup_value
        return np.where(
            s >= self.rho, sup, np.minimum(self.base._value_right(s), sup)
        )

    def _primitive(self, s):
        head = self.base._primitive(np.minimum(s, self.rho))
        return head + self.sup_value * np.maximum(s - self.rho, 0.0)

    def _conjugate(self, a):
        sup = self.sup_value
        out = np.asarray(self.base._conjugate(np.minimum(a, sup)), dtype=np.float64).copy()
        out[np.asarray(a) > sup] = np.inf
        return out

    def to_dict(self) -> dict:
        return {"kind": "truncated", "rho": self.rho, "base": self.base.to_dict()}


def truncate(profile: Profile, rho: float) -> TruncatedProfile:
    """Freeze a profile above the level rho."""
    return TruncatedProfile(profile, rho)


def make_profile(config: dict) -> Profile:
    """Build a profile from a config mapping {kind, p?, table_path?, ...}."""
    kind = config.get("kind")
    if kind == "heaviside":
        return Heaviside()
    if kind == "power":
        if "p" not in config:
            raise ValueError("power profile config needs an exponent key 'p'")
        return Power(float(config["p"]))
    if kind == "tabulated":
        if "table_path" in config:
            return Tabulated.from_csv(config["table_path"])
        if "s_nodes" in config and "f_nodes" in config:
            return Tabulated(np.asarray(config["s_nodes"], float), np.asarray(config["f_nodes"], float))
        raise ValueError("tabulated profile config needs 'table_path' or node arrays")
    raise ValueError(f"unknown profile kind {kind!r}")


# ---------------------------------------------------------------------------
# growth diagnostics


@dataclass(frozen=True)
class GrowthConstants:
    """Certificate (frac, offset) for F(s) <= frac*s*f(s) + offset*f(s)."""

    frac: float
    offset: float


def growth_constants(
    profile: Profile,
    s_max: float = 50.0,
    n_samples: int = 201,
) -> GrowthConstants | None:
    """Find constants certifying that the primitive grows sublinearly in s*f.

    For power profiles the sharp fraction 1/(p+1) is exact.  Other kinds are
    checked on a sample grid; returns None when no sampled pair certifies the
    bound, which signals the profile cannot drive the unbounded-profile solve.
    """
    if isinstance(profile, Power):
        return GrowthConstants(1.0 / (profile.p + 1.0), 1.0)
    if isinstance(profile, TruncatedProfile):
        # the growth condition concerns the untruncated tail
        return growth_constants(profile.base, s_max, n_samples)
    s = np.linspace(0.0, s_max, n_samples)
    F = np.asarray(profile.primitive(s))
    f = np.asarray(profile.value(s))
    for frac in np.linspace(0.05, 0.95, 19):
        for offset in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0):
            if np.all(F <= frac * s * f + offset * f + 1e-12):
                return GrowthConstants(float(frac), float(offset))
    return None


def tail_rate_threshold(frac: float, kappa: float) -> float:
    """Exponential rate 4*pi*min(2*frac, 2 - 2*frac)/kappa tied to a growth fraction."""
    if not (0.0 < frac < 1.0):
        raise ValueError("growth fraction must lie in (0, 1)")
    if kappa <= 0:
        raise ValueError("circulation kappa must be positive")
    return 4.0 * math.pi * min(2.0 * frac, 2.0 - 2.0 * frac) / kappa


@dataclass(frozen=True)
class TailCheck:
    """Result of the subexponential-tail sampling; witness where f*exp(-rate*s) dips."""

    passed: bool
    witness_s: float
    witness_value: float


def has_subexponential_tail(
    profile: Profile,
    rate: float,
    s_max: float = 200.0,
    tol: float = 1e-8,
    n_samples: int = 400,
) -> TailCheck:
    """Sample f(s)*exp(-rate*s) over the tail window [s_max/2, s_max].

    A finite-horizon proxy for liminf f(s)*exp(-rate*s) = 0: passes when some
    tail sample falls below tol.  Sampling starts at s_max/2 because every
    admissible profile vanishes at 0, which would satisfy the bound vacuously.
    """
    if rate <= 0:
        raise ValueError("tail rate must be positive")
    s = np.linspace(0.5 * s_max, s_max, n_samples)
    with np.errstate(over="ignore"):
        vals = np.asarray(profile.value(s)) * np.exp(-rate * s)
    k = int(np.argmin(vals))
    return TailCheck(bool(vals[k] <= tol), float(s[k]), float(vals[k]))
