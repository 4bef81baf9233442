"""Uniform cell-centered grids, discrete scalar fields, and symmetry extensions.

The computational window is an axis-aligned rectangle in the right half-plane
{x1 > 0}, split into n1 x n2 uniform cells.  Scalar fields (vorticity, stream
function, diagnostics) hold one value per cell center and are immutable value
objects: operations return new fields instead of mutating.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Literal

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]

Role = Literal["vorticity", "stream", "generic"]

_CSV_FLOAT = "%.17g"  # enough significant digits for exact float64 round-trips


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered rectangle.

    Cell (i, j) has center (x1_min + (i + 1/2) h1, x2_min + (j + 1/2) h2),
    i = 0..n1-1, j = 0..n2-1.  n2 must be even so that x2 = 0 can sit on a
    cell interface whenever the window is symmetric about the x1-axis, which
    makes reflection in x2 an exact permutation of cells.
    """

    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    n1: int
    n2: int

    def __post_init__(self) -> None:
        for v in (self.x1_min, self.x1_max, self.x2_min, self.x2_max):
            if not math.isfinite(v):
                raise ValueError("grid extents must be finite")
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("grid needs at least 2 cells per direction")
        if self.n2 % 2 != 0:
            raise ValueError("n2 must be even so that x2 = 0 is a cell interface")
        if self.x1_max <= self.x1_min or self.x2_max <= self.x2_min:
            raise ValueError("grid window is degenerate")

    @property
    def h1(self) -> float:
        return (self.x1_max - self.x1_min) / self.n1

    @property
    def h2(self) -> float:
        return (self.x2_max - self.x2_min) / self.n2

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    @property
    def x1_centers(self) -> FloatArray:
        return self.x1_min + (np.arange(self.n1) + 0.5) * self.h1

    @property
    def x2_centers(self) -> FloatArray:
        return self.x2_min + (np.arange(self.n2) + 0.5) * self.h2

    def center_mesh(self) -> tuple[FloatArray, FloatArray]:
        """Cell-center coordinates as two read-only (n1, n2) arrays."""
        return _cached_mesh(self)

    def window(self) -> tuple[float, float, float, float]:
        return (self.x1_min, self.x1_max, self.x2_min, self.x2_max)

    def is_symmetric_x2(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, abs(self.x2_max))
        return abs(self.x2_min + self.x2_max) <= tol * scale

    def to_dict(self) -> dict:
        return {
            "x1_min": self.x1_min,
            "x1_max": self.x1_max,
            "x2_min": self.x2_min,
            "x2_max": self.x2_max,
            "n1": self.n1,
            "n2": self.n2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            float(d["x1_min"]), float(d["x1_max"]),
            float(d["x2_min"]), float(d["x2_max"]),
            int(d["n1"]), int(d["n2"]),
        )


@lru_cache(maxsize=64)
def _cached_mesh(grid: GridSpec) -> tuple[FloatArray, FloatArray]:
    x1c, x2c = np.meshgrid(grid.x1_centers, grid.x2_centers, indexing="ij")
    x1c.setflags(write=False)
    x2c.setflags(write=False)
    return x1c, x2c


def build_grid(r: float, n1: int, n2: int) -> GridSpec:
    """Default window (r/2, 2r) x (-1, 1) around the right-hand core location.

    The window sits strictly inside the half-plane {x1 > 0}; r must be
    positive.  Heights are fixed at (-1, 1) regardless of r.
    """
    if not (r > 0 and math.isfinite(r)):
        raise ValueError("core offset r must be positive and finite")
    return GridSpec(0.5 * r, 2.0 * r, -1.0, 1.0, n1, n2)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One float64 value per cell center; immutable after construction."""

    grid: GridSpec
    values: FloatArray
    role: Role = "generic"

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (self.grid.n1, self.grid.n2):
            raise ValueError(
                f"field shape {arr.shape} does not match grid "
                f"({self.grid.n1}, {self.grid.n2})"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        if self.role == "vorticity" and arr.size and arr.min() < 0.0:
            raise ValueError("vorticity fields must be nonnegative")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def with_values(self, values: FloatArray, role: Role | None = None) -> "ScalarField":
        return ScalarField(self.grid, values, self.role if role is None else role)


def integrate(field: ScalarField) -> float:
    """Cell-sum quadrature h1*h2*sum(values) over the window."""
    return float(field.grid.cell_area * field.values.sum())


def moment_x1(field: ScalarField) -> float:
    """First moment against x1: h1*h2*sum(x1_c * values)."""
    g = field.grid
    return float(g.cell_area * (g.x1_centers[:, None] * field.values).sum())


@dataclass(frozen=True, eq=False)
class FullPlaneField:
    """Odd extension of a half-plane field across the x2-axis wall x1 = 0.

    The extension keeps the original cells and adds mirrored cells at
    (-x1_c, x2_c) carrying the negated value, so the extended field is odd
    in x1 and integrates to zero exactly.
    """

    half: ScalarField

    def cells(self) -> Iterator[tuple[float, float, float]]:
        """Yield (x1, x2, value) for every extended cell, mirror half first.

        Mirror cells are emitted in ascending x1 so the full listing is
        ordered left to right.
        """
        g = self.half.grid
        x1 = g.x1_centers
        x2 = g.x2_centers
        vals = self.half.values
        for i in range(g.n1 - 1, -1, -1):
            for j in range(g.n2):
                yield (-x1[i], x2[j], -vals[i, j])
        for i in range(g.n1):
            for j in range(g.n2):
                yield (x1[i], x2[j], vals[i, j])

    def value_at(self, x1: float, x2: float) -> float:
        """Piecewise-constant lookup; zero outside the two mirrored windows."""
        if x1 >= 0.0:
            return _cell_lookup(self.half, x1, x2)
        return -_cell_lookup(self.half, -x1, x2)

    def integral(self) -> float:
        g = self.half.grid
        s = float(g.cell_area * self.half.values.sum())
        return s - s

    def write_csv(self, path: str | Path) -> None:
        g = self.half.grid
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write("x1,x2,value\n")
            for x1, x2, v in self.cells():
                fh.write(
                    f"{x1:.17g},{x2:.17g},{v:.17g}\n"
                )
        meta = {"grid": g.to_dict(), "role": self.half.role, "layout": "full_plane_odd"}
        _sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _cell_lookup(field: ScalarField, x1: float, x2: float) -> float:
    g = field.grid
    if not (g.x1_min <= x1 < g.x1_max and g.x2_min <= x2 < g.x2_max):
        return 0.0
    i = min(int((x1 - g.x1_min) / g.h1), g.n1 - 1)
    j = min(int((x2 - g.x2_min) / g.h2), g.n2 - 1)
    return float(field.values[i, j])


def extend_odd(zeta: ScalarField) -> FullPlaneField:
    """Odd extension in x1 of a field supported in the right half-plane."""
    if zeta.grid.x1_min <= 0.0:
        raise ValueError("odd extension requires a window with x1_min > 0")
    return FullPlaneField(zeta)


@dataclass(frozen=True)
class SupportStats:
    """Geometry of the positive-part support {value > threshold}.

    An empty support is flagged explicitly: diameter and area are zero and
    the centroid is (nan, nan).
    """

    diameter: float
    centroid: tuple[float, float]
    dist_to_boundary: float
    area: float
    aspect_ratio: float
    n_cells: int
    is_empty: bool


def support_stats(
    zeta: ScalarField,
    threshold: float = 0.0,
    rect: tuple[float, float, float, float] | None = None,
) -> SupportStats:
    """Support diagnostics of a field: cells with value strictly above threshold.

    Parameters
    ----------
    zeta : ScalarField
        Field whose support is measured.
    threshold : float
        Support cut; cells with value > threshold count.
    rect : (lo1, hi1, lo2, hi2), optional
        Rectangle whose boundary the support distance is measured against.
        Defaults to the grid window.

    Returns
    -------
    SupportStats
        Max pairwise center distance, value-weighted centroid, min distance
        from support centers to the rectangle boundary, cell-count area, and
        the bounding-extent aspect ratio (>= 1).
    """
    g = zeta.grid
    mask = zeta.values > threshold
    n = int(mask.sum())
    if n == 0:
        return SupportStats(0.0, (math.nan, math.nan), math.inf, 0.0, math.nan, 0, True)
    ii, jj = np.nonzero(mask)
    cx1 = g.x1_centers[ii]
    cx2 = g.x2_centers[jj]
    w = zeta.values[mask]
    centroid = (float((cx1 * w).sum() / w.sum()), float((cx2 * w).sum() / w.sum()))
    diameter = _point_set_diameter(cx1, cx2)
    lo1, hi1, lo2, hi2 = rect if rect is not None else g.window()
    dist = float(np.min(np.minimum.reduce([cx1 - lo1, hi1 - cx1, cx2 - lo2, hi2 - cx2])))
    area = n * g.cell_area
    ext1 = (cx1.max() - cx1.min()) + g.h1
    ext2 = (cx2.max() - cx2.min()) + g.h2
    aspect = max(ext1, ext2) / min(ext1, ext2)
    return SupportStats(diameter, centroid, dist, area, float(aspect), n, False)


def _point_set_diameter(x: FloatArray, y: FloatArray) -> float:
    """Max pairwise distance; hull reduction above a size cutoff."""
    n = x.size
    if n == 1:
        return 0.0
    if n > 2000:
        from scipy.spatial import ConvexHull, QhullError  # deferred: scipy.spatial is heavy

        pts = np.column_stack([x, y])
        try:
            hull = ConvexHull(pts)
            pts = pts[hull.vertices]
            x, y = pts[:, 0], pts[:, 1]
        except QhullError:
            pass  # degenerate (collinear) sets fall through to the direct scan
    dx = x[:, None] - x[None, :]
    dy = y[:, None] - y[None, :]
    return float(np.sqrt((dx * dx + dy * dy).max()))


def bilinear_eval(field: ScalarField, x1: FloatArray, x2: FloatArray) -> FloatArray:
    """Bilinear interpolation of cell-center values, clamped at the window edge."""
    g = field.grid
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    t1 = np.clip((x1 - g.x1_min) / g.h1 - 0.5, 0.0, g.n1 - 1.0)
    t2 = np.clip((x2 - g.x2_min) / g.h2 - 0.5, 0.0, g.n2 - 1.0)
    i0 = np.minimum(t1.astype(int), g.n1 - 2)
    j0 = np.minimum(t2.astype(int), g.n2 - 2)
    a = t1 - i0
    b = t2 - j0
    v = field.values
    return (
        v[i0, j0] * (1 - a) * (1 - b)
        + v[i0 + 1, j0] * a * (1 - b)
        + v[i0, j0 + 1] * (1 - a) * b
        + v[i0 + 1, j0 + 1] * a * b
    )


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(csv_path.suffix + ".meta.json")


def write_field_csv(field: ScalarField, path: str | Path) -> None:
    """Write a field as CSV rows x1,x2,value (row-major over cell centers).

    Values carry 17 significant digits so float64 round-trips exactly.  Grid
    metadata goes to a JSON sidecar next to the CSV.
    """
    path = Path(path)
    g = field.grid
    x1m, x2m = g.center_mesh()
    data = np.column_stack([x1m.ravel(), x2m.ravel(), field.values.ravel()])
    np.savetxt(path, data, fmt=_CSV_FLOAT, delimiter=",", header="x1,x2,value", comments="")
    meta = {"grid": g.to_dict(), "role": field.role}
    _sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def read_field_csv(path: str | Path) -> ScalarField:
    """Read a field written by write_field_csv; validates shape against the sidecar."""
    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
    grid = GridSpec.from_dict(meta["grid"])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (grid.n1 * grid.n2, 3):
        raise ValueError(f"{path}: row count does not match the sidecar grid")
    vals = data[:, 2].reshape(grid.n1, grid.n2)
    x1m, x2m = grid.center_mesh()
    if not (np.allclose(data[:, 0].reshape(x1m.shape), x1m, rtol=0, atol=1e-12)
            and np.allclose(data[:, 1].reshape(x2m.shape), x2m, rtol=0, atol=1e-12)):
        raise ValueError(f"{path}: cell centers do not match the sidecar grid")
    return ScalarField(grid, vals, meta.get("role", "generic"))
