"""Uniform radial grid and discrete operators for rotationally symmetric
conformal factors on a disc chart.

A factor u describes the metric e^{2u} (dx^2 + dy^2).  For radial functions
the flat Laplacian reduces to

    lap f = f_rr + f_r / r,

with the origin value supplied by the two-dimensional mean value property:
even symmetry across r = 0 gives lap f(0) ~ 4 (f_1 - f_0) / h^2.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MIN_NODES = 16


class GridError(ValueError):
    """Invalid grid, field, or operator input."""


@dataclass(frozen=True)
class RadialGrid:
    """Uniform nodes r_i = i h on [0, r_max] with h = r_max / (n_nodes - 1)."""

    n_nodes: int
    r_max: float

    def __post_init__(self):
        if self.n_nodes < MIN_NODES:
            raise GridError(f"n_nodes must be >= {MIN_NODES}, got {self.n_nodes}")
        if not 0.0 < self.r_max < 1.0:
            raise GridError(f"r_max must lie in (0, 1), got {self.r_max}")

    @property
    def h(self) -> float:
        return self.r_max / (self.n_nodes - 1)

    @cached_property
    def r(self) -> np.ndarray:
        nodes = np.arange(self.n_nodes) * self.h
        nodes[-1] = self.r_max  # pin the endpoint exactly
        nodes.flags.writeable = False
        return nodes

    def index_at(self, radius: float) -> int:
        """Index of the node nearest to the given radius."""
        if not 0.0 <= radius <= self.r_max:
            raise GridError(f"radius {radius} outside [0, {self.r_max}]")
        return int(round(radius / self.h))


@dataclass(frozen=True)
class Field:
    """Sampled conformal factor, one value per grid node."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise GridError(
                f"field has {vals.shape} values for a grid of {self.grid.n_nodes} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise GridError("field values must be finite at every node")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)


def laplacian_values(values: np.ndarray, h: float, r: np.ndarray) -> np.ndarray:
    """Array core of the radial Laplacian; see laplacian() for the contract."""
    out = np.empty_like(values)
    out[0] = 4.0 * (values[1] - values[0]) / h**2
    d2 = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h**2
    d1 = (values[2:] - values[:-2]) / (2.0 * h)
    out[1:-1] = d2 + d1 / r[1:-1]
    # One-sided second-order estimate at r_max; boundary quality only.  The
    # stencils are grouped as differences so constants are exactly harmonic.
    b1, b2, b3 = values[-1] - values[-2], values[-2] - values[-3], values[-3] - values[-4]
    d2b = (2.0 * b1 - 3.0 * b2 + b3) / h**2
    d1b = (3.0 * b1 - b2) / (2.0 * h)
    out[-1] = d2b + d1b / r[-1]
    return out


def laplacian(f: Field) -> Field:
    """Discrete radial Laplacian f_rr + f_r / r.

    Interior nodes use the standard second-order three point stencil.  The
    origin uses the mean-value stencil 4 (f_1 - f_0) / h^2 (exact through
    quadratic order for even radial functions).  The r_max node carries a
    one-sided estimate and should be treated as boundary quality.
    """
    return f.with_values(laplacian_values(f.values, f.grid.h, f.grid.r))


def integrate_radial(f: Field, r_lo: float, r_hi: float) -> float:
    """Composite trapezoidal approximation of the radial length integral
    int_{r_lo}^{r_hi} e^{f(r)} dr.

    The factor is interpolated linearly at the interval endpoints before
    exponentiation; second-order accurate for smooth f.
    """
    if not (0.0 <= r_lo < r_hi <= f.grid.r_max * (1.0 + 1e-12)):
        raise GridError(
            f"integration limits [{r_lo}, {r_hi}] must satisfy "
            f"0 <= r_lo < r_hi <= {f.grid.r_max}"
        )
    r = f.grid.r
    inside = (r > r_lo) & (r < r_hi)
    pts_r = np.concatenate(([r_lo], r[inside], [r_hi]))
    pts_f = np.concatenate(
        ([np.interp(r_lo, r, f.values)], f.values[inside], [np.interp(r_hi, r, f.values)])
    )
    return float(np.trapezoid(np.exp(pts_f), pts_r))
