"""Half-plane Green operator on the grid.

The operator maps a vorticity field to its stream contribution through the
log kernel with an odd image across the x1 = 0 axis.  Cell-averaged midpoint
quadrature; the singular self-cell weight is the exact cell average of the
log kernel.  The default strategy evaluates the convolution with FFTs on a
doubled grid; a direct summation path exists as a slow independent check.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.integrate import quad

from .geometry import FloatArray, GridSpec, ScalarField

_TWO_PI = 2.0 * math.pi


def _log_cell_inner(y: float, a: float) -> float:
    # integral of log(u**2 + y**2) du over [0, a], in closed form
    if y == 0.0:
        return 2.0 * a * (math.log(a) - 1.0)
    return a * math.log(a * a + y * y) - 2.0 * a + 2.0 * y * math.atan(a / y)


@lru_cache(maxsize=None)
def self_cell_coefficient(h1: float, h2: float) -> float:
    """Average of (1/2pi) log(1/|x_c - y|) over a cell of size h1 x h2.

    The inner direction is integrated in closed form, leaving one adaptive
    quadrature in the other direction.  By quadrant symmetry the cell integral
    of log|x_c - y| equals 2 * integral of log(u**2 + v**2) over one quadrant
    [0, h1/2] x [0, h2/2].
    """
    if not (h1 > 0 and h2 > 0):
        raise ValueError("cell sides must be positive")
    a, b = 0.5 * h1, 0.5 * h2
    val, err = quad(_log_cell_inner, 0.0, b, args=(a,), epsabs=1e-14, epsrel=1e-13)
    if err > 1e-10:
        raise RuntimeError(f"self-cell quadrature did not converge (err={err:g})")
    mean_log = 2.0 * val / (h1 * h2)
    return -mean_log / _TWO_PI


class GreenOperator:
    """Discrete half-plane Green operator for fields on one grid.

    apply() returns the cell-centered values of the induced stream
    contribution.  Inputs that are symmetric across x2 = 0 produce outputs
    that are bitwise symmetric: the FFT result is projected back onto the
    even subspace, which the exact operator leaves invariant.
    """

    def __init__(self, grid: GridSpec, method: str = "fft") -> None:
        if grid.x1_min <= 0.0:
            raise ValueError("the operator needs the grid strictly inside x1 > 0")
        if method not in ("fft", "direct"):
            raise ValueError(f"unknown method {method!r}")
        self.grid = grid
        self.method = method
        self._coeff = self_cell_coefficient(grid.h1, grid.h2)
        if method == "fft":
            self._prepare_fft()

    # -- fft strategy ----------------------------------------------------
    def _prepare_fft(self) -> None:
        g = self.grid
        n1, n2 = g.n1, g.n2
        area = g.cell_area
        shape = (2 * n1, 2 * n2)
        idx1 = np.arange(2 * n1)
        idx2 = np.arange(2 * n2)
        d1 = np.where(idx1 >= n1, idx1 - 2 * n1, idx1).astype(np.float64)
        d2 = np.where(idx2 >= n2, idx2 - 2 * n2, idx2).astype(np.float64)
        r2 = (d1[:, None] * g.h1) ** 2 + (d2[None, :] * g.h2) ** 2
        with np.errstate(divide="ignore"):
            table_d = -(area / (2.0 * _TWO_PI)) * np.log(r2)
        table_d[0, 0] = area * self._coeff
        # image displacement along x1: x1_i + x1_j = 2*x1_min + (d1 + n1)*h1
        # after flipping the source field in x1
        xi = 2.0 * g.x1_min + (d1 + n1) * g.h1
        r2i = xi[:, None] ** 2 + (d2[None, :] * g.h2) ** 2
        table_i = -(area / (2.0 * _TWO_PI)) * np.log(r2i)
        self._shape = shape
        self._hat_direct = sfft.rfft2(table_d)
        self._hat_image = sfft.rfft2(table_i)

    def _apply_fft(self, values: FloatArray) -> FloatArray:
        n1, n2 = self.grid.n1, self.grid.n2
        pad = np.zeros(self._shape, dtype=np.float64)
        pad[:n1, :n2] = values
        direct = sfft.irfft2(sfft.rfft2(pad) * self._hat_direct, s=self._shape)
        pad[:n1, :n2] = values[::-1, :]
        image = sfft.irfft2(sfft.rfft2(pad) * self._hat_image, s=self._shape)
        return direct[:n1, :n2] - image[:n1, :n2]

    # -- direct strategy --------------------------------------------------
    def _apply_direct(self, values: FloatArray) -> FloatArray:
        g = self.grid
        x1c, x2c = g.center_mesh()
        x1f = x1c.ravel()
        x2f = x2c.ravel()
        src = values.ravel() * g.cell_area
        out = np.empty(x1f.size, dtype=np.float64)
        chunk = max(1, min(2048, 2**24 // max(1, x1f.size)))
        for lo in range(0, x1f.size, chunk):
            hi = min(lo + chunk, x1f.size)
            dx1 = x1f[lo:hi, None] - x1f[None, :]
            dx2 = x2f[lo:hi, None] - x2f[None, :]
            r2 = dx1 * dx1 + dx2 * dx2
            with np.errstate(divide="ignore"):
                k = -np.log(r2) / (2.0 * _TWO_PI)
            k[r2 == 0.0] = self._coeff
            s1 = x1f[lo:hi, None] + x1f[None, :]
            k -= -np.log(s1 * s1 + dx2 * dx2) / (2.0 * _TWO_PI)
            out[lo:hi] = k @ src
        return out.reshape(values.shape)

    # -- public -----------------------------------------------------------
    def apply(self, values: FloatArray) -> FloatArray:
        """Stream contribution of a cellwise-constant field, cell centers."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.grid.n1, self.grid.n2):
            raise ValueError("field shape does not match the operator grid")
        even_input = np.array_equal(values, values[:, ::-1])
        if self.method == "fft":
            out = self._apply_fft(values)
        else:
            out = self._apply_direct(values)
        if even_input:
            # exact operator commutes with the x2 mirror; restore it bitwise
            out = 0.5 * (out + out[:, ::-1])
        return out


def green_apply(op: GreenOperator, field: ScalarField) -> ScalarField:
    """Operator applied to a field, wrapped as a stream-role field."""
    if field.grid != op.grid:
        raise ValueError("field grid does not match the operator grid")
    return ScalarField(op.grid, op.apply(field.values), role="stream")


def quadratic_form(op: GreenOperator, values: FloatArray, other: FloatArray | None = None) -> float:
    """Bilinear form <u, G v> with cell-area weighting; u = v when other is None."""
    gv = op.apply(values if other is None else other)
    return float(op.grid.cell_area * np.sum(np.asarray(values) * gv))


def stream_total(op: GreenOperator, zeta_values: FloatArray, w_speed: float, mu: float) -> FloatArray:
    """Relative stream in the traveling frame: G(zeta) - w_speed*x1 - mu."""
    x1c, _ = op.grid.center_mesh()
    return op.apply(zeta_values) - w_speed * x1c - mu


def velocity_from_stream(psi: ScalarField) -> tuple[FloatArray, FloatArray]:
    """Velocity (v1, v2) = (d psi/d x2, -d psi/d x1), one-sided at edges."""
    d_dx1, d_dx2 = np.gradient(psi.values, psi.grid.h1, psi.grid.h2, edge_order=2)
    return d_dx2, -d_dx1


def potential_at_points(zeta: ScalarField, points: FloatArray) -> FloatArray:
    """Evaluate the induced stream at arbitrary points by direct summation.

    Points may sit anywhere with x1 >= 0; a point on the axis gets an exact
    zero by direct/image cancellation.  A point that coincides with a cell
    center reuses the self-cell weight for that cell.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (m, 2)")
    g = zeta.grid
    x1c, x2c = g.center_mesh()
    x1f = x1c.ravel()
    x2f = x2c.ravel()
    src = zeta.values.ravel() * g.cell_area
    coeff = self_cell_coefficient(g.h1, g.h2)
    out = np.empty(pts.shape[0], dtype=np.float64)
    for i, (p1, p2) in enumerate(pts):
        dx1 = p1 - x1f
        dx2 = p2 - x2f
        r2 = dx1 * dx1 + dx2 * dx2
        with np.errstate(divide="ignore"):
            k = -np.log(r2) / (2.0 * _TWO_PI)
        k[r2 == 0.0] = coeff
        s1 = p1 + x1f
        k -= -np.log(s1 * s1 + dx2 * dx2) / (2.0 * _TWO_PI)
        out[i] = k @ src
    return out
