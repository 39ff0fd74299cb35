"""Closed-form rotationally symmetric conformal metrics on the disc chart,
the discrete Gauss curvature operator, and the disc <-> cylinder transform.

A factor u defines the metric e^{2u} |dz|^2 with Gauss curvature

    K = -e^{-2u} lap u.

Reference factors:

    flat(c)               u = c                              K = 0
    hyperbolic_cusp       u = -ln(-r ln r),   0 < r < 1      K = -1, complete at 0
    hyperbolic_band(d)    u = v_d(s) + s,     s = -ln r      K = -1 on d < s < pi/d + d
                          v_d(s) = -ln[ sin(d (s - d)) / d ]
    sphere(lam, shift)    u = ln(2 / (1 + (r/lam)^2)) - ln lam + shift
    cigar                 u = -(1/2) ln(1 + r^2)             K = 2 / (1 + r^2)
    truncated_cusp(k)     cusp capped at level k, see surgery.truncate

On the cylinder (s, theta) with s = -ln r the same metric reads
e^{2u_cyl} (ds^2 + dtheta^2) with u_cyl = u + ln r.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Field, RadialGrid, laplacian

FLAT = "flat"
HYPERBOLIC_CUSP = "hyperbolic_cusp"
HYPERBOLIC_BAND = "hyperbolic_band"
SPHERE = "sphere"
CIGAR = "cigar"
TRUNCATED_CUSP = "truncated_cusp"

KINDS = (FLAT, HYPERBOLIC_CUSP, HYPERBOLIC_BAND, SPHERE, CIGAR, TRUNCATED_CUSP)

# Factors that diverge to +infinity toward the puncture; these admit the
# capped-origin convention used by surgery.truncate.
DIVERGENT_KINDS = (HYPERBOLIC_CUSP, HYPERBOLIC_BAND)


class MetricDomainError(ValueError):
    """Evaluation outside a metric's domain of definition."""


@dataclass(frozen=True)
class MetricSpec:
    """Tagged choice of closed-form metric with its parameters."""

    kind: str
    c: float = 0.0        # flat constant
    delta: float = 0.0    # band parameter
    lam: float = 1.0      # sphere dilation
    shift: float = 0.0    # sphere additive constant
    k: float = 0.0        # truncation level

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MetricDomainError(f"unknown metric kind '{self.kind}'")
        for name in ("c", "delta", "lam", "shift", "k"):
            if not np.isfinite(getattr(self, name)):
                raise MetricDomainError(f"metric parameter {name} must be finite")
        if self.kind == HYPERBOLIC_BAND and self.delta <= 0.0:
            raise MetricDomainError("band parameter delta must be > 0")
        if self.kind == SPHERE and self.lam <= 0.0:
            raise MetricDomainError("sphere dilation lam must be > 0")
        if self.kind == TRUNCATED_CUSP and self.k <= 0.0:
            raise MetricDomainError("truncation level k must be > 0")

    @staticmethod
    def flat(c: float = 0.0) -> "MetricSpec":
        return MetricSpec(FLAT, c=c)

    @staticmethod
    def hyperbolic_cusp() -> "MetricSpec":
        return MetricSpec(HYPERBOLIC_CUSP)

    @staticmethod
    def hyperbolic_band(delta: float) -> "MetricSpec":
        return MetricSpec(HYPERBOLIC_BAND, delta=delta)

    @staticmethod
    def sphere(lam: float = 1.0, shift: float = 0.0) -> "MetricSpec":
        return MetricSpec(SPHERE, lam=lam, shift=shift)

    @staticmethod
    def cigar() -> "MetricSpec":
        return MetricSpec(CIGAR)

    @staticmethod
    def truncated_cusp(k: float) -> "MetricSpec":
        return MetricSpec(TRUNCATED_CUSP, k=k)


def sphere_profile(x):
    """Round-sphere factor ln(2 / (1 + x^2)); curvature +1 at lam = 1."""
    x = np.asarray(x, dtype=float)
    out = np.log(2.0) - np.log1p(x * x)
    return float(out) if out.ndim == 0 else out


def cusp_factor(r):
    """Complete hyperbolic factor -ln(-r ln r) on the punctured disc."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0) or np.any(r >= 1.0):
        raise MetricDomainError("cusp factor requires 0 < r < 1")
    out = -np.log(-r * np.log(r))
    return float(out) if out.ndim == 0 else out


def band_factor(r, delta):
    """Hyperbolic band factor pulled back to the disc chart."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0) or np.any(r >= 1.0):
        raise MetricDomainError("band factor requires 0 < r < 1")
    s = -np.log(r)
    lo, hi = delta, np.pi / delta + delta
    if np.any(s <= lo) or np.any(s >= hi):
        raise MetricDomainError(
            f"band factor requires -ln r in ({lo:.6g}, {hi:.6g})"
        )
    out = -np.log(np.sin(delta * (s - delta)) / delta) + s
    return float(out) if out.ndim == 0 else out


def eval_factor(spec: MetricSpec, r):
    """Evaluate the closed-form conformal factor at radius r (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0):
        raise MetricDomainError("radius must be nonnegative")
    if spec.kind == FLAT:
        out = np.full_like(r_arr, spec.c)
    elif spec.kind == HYPERBOLIC_CUSP:
        out = cusp_factor(r_arr)
    elif spec.kind == HYPERBOLIC_BAND:
        out = band_factor(r_arr, spec.delta)
    elif spec.kind == SPHERE:
        out = sphere_profile(r_arr / spec.lam) - np.log(spec.lam) + spec.shift
    elif spec.kind == CIGAR:
        out = -0.5 * np.log1p(r_arr * r_arr)
    elif spec.kind == TRUNCATED_CUSP:
        from .surgery import psi  # local import; surgery builds on metrics

        if np.any(r_arr >= 1.0):
            raise MetricDomainError("truncated cusp factor requires r < 1")
        out = np.where(
            r_arr > 0.0,
            psi(_cusp_safe(r_arr) - spec.k) + spec.k,
            spec.k,
        )
    else:  # pragma: no cover - guarded by MetricSpec
        raise MetricDomainError(f"unknown metric kind '{spec.kind}'")
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _cusp_safe(r_arr: np.ndarray) -> np.ndarray:
    """Cusp factor with r = 0 entries mapped to +inf (divergent limit)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log(-r_arr * np.log(r_arr))
    return np.where(r_arr > 0.0, out, np.inf)


def sample(spec: MetricSpec, grid: RadialGrid, origin_value: float | None = None) -> Field:
    """Sample a factor on a grid, filling the origin node when the factor is
    singular there.

    For factors defined at r = 0 the closed form is used and origin_value is
    ignored.  For puncture-divergent factors (cusp, band) the origin node is
    filled with origin_value, or with the value at the first positive node
    when origin_value is None; assertions about node 0 are then up to the
    caller.
    """
    r = grid.r
    if spec.kind in DIVERGENT_KINDS:
        vals = np.empty(grid.n_nodes)
        vals[1:] = eval_factor(spec, r[1:])
        vals[0] = vals[1] if origin_value is None else origin_value
        return Field(grid, vals)
    return Field(grid, eval_factor(spec, r))


def gauss_curvature(u: Field) -> Field:
    """Discrete Gauss curvature K = -e^{-2u} lap u.

    Inherits the Laplacian's quality flags: second order at interior nodes
    and the origin, one-sided boundary quality at r_max.
    """
    lap = laplacian(u)
    return u.with_values(-np.exp(-2.0 * u.values) * lap.values)


def to_cylinder(u_value: float, r: float) -> float:
    """Disc-chart factor at radius r converted to the cylinder chart at
    s = -ln r: u_cyl = u + ln r."""
    if not 0.0 < r < 1.0:
        raise MetricDomainError("cylinder transform requires 0 < r < 1")
    return float(u_value + np.log(r))


def cusp_distance(r_lo: float, r_hi: float) -> float:
    """Exact hyperbolic radial length ln(-ln r_lo) - ln(-ln r_hi) between two
    radii in the cusp metric."""
    if not 0.0 < r_lo < r_hi < 1.0:
        raise MetricDomainError("cusp distance requires 0 < r_lo < r_hi < 1")
    return float(np.log(-np.log(r_lo)) - np.log(-np.log(r_hi)))
