"""Quantitative diagnostics for simulated flows: distances, decay-law fits,
persistence times, and the convex monotone functional.

For rotationally symmetric metrics radial curves are geodesics, so the
distance from the origin to r = 1/2 is the one-dimensional length integral
of e^u.  Decay laws are extracted as least-squares fits of a diagnostic
against -ln t or ln t over a scaling window.
"""

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .grid import Field, integrate_radial
from .metrics import gauss_curvature


class AnalysisError(ValueError):
    """Invalid diagnostic input."""


@dataclass(frozen=True)
class DiagnosticsRow:
    """Per-snapshot observables of one run."""

    t: float
    sup_u_half: float        # sup of u over r <= 1/2
    dist_half: float         # radial length from the origin to r = 1/2
    sup_abs_K: float         # sup of |K| over r <= 1/2
    min_K: float             # min of K over all but the boundary node
    functional_value: float  # convex functional, NaN when not tracked


@dataclass
class TimeSeries:
    """Ordered snapshots of one run plus per-snapshot diagnostics.

    step_functional holds the (t, value) trace of the monotone functional at
    every accepted solver step when a probe was requested; it is finer than
    the snapshot diagnostics and is used by the monotonicity certificate.
    """

    run_id: str
    snapshots: list[tuple[float, Field]]
    diagnostics: list[DiagnosticsRow]
    step_functional: list[tuple[float, float]] = dataclass_field(default_factory=list)

    def __post_init__(self):
        times = [t for t, _ in self.snapshots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise AnalysisError("snapshot times must be strictly increasing")
        if len(self.diagnostics) != len(self.snapshots):
            raise AnalysisError("diagnostics row count must equal snapshot count")

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])


@dataclass(frozen=True)
class FitResult:
    """Least-squares line fit of a diagnostic over a time window."""

    observable: str
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise AnalysisError("fit window must satisfy t_lo < t_hi")


def sup_u_half(u: Field) -> float:
    """Sup of the factor over the nodes with r <= 1/2."""
    mask = u.grid.r <= 0.5
    if not np.any(mask):
        raise AnalysisError("grid does not reach r = 1/2")
    return float(np.max(u.values[mask]))


def distance_to_half(u: Field) -> float:
    """Radial length from the origin to r = 1/2 in the metric e^{2u} |dz|^2."""
    if u.grid.r_max < 0.5:
        raise AnalysisError("grid must cover [0, 1/2]")
    return integrate_radial(u, 0.0, 0.5)


def curvature_extremes(u: Field) -> tuple[float, float]:
    """(sup |K| over r <= 1/2, min K over all but the boundary node)."""
    K = gauss_curvature(u).values
    mask = u.grid.r <= 0.5
    return float(np.max(np.abs(K[mask]))), float(np.min(K[:-1]))


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    var = float(np.sum((x - xm) ** 2))
    if var == 0.0:
        raise AnalysisError("degenerate fit window: no spread in the abscissa")
    slope = float(np.sum((x - xm) * (y - ym)) / var)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def select_window(
    times: np.ndarray, values: np.ndarray, *, decreasing: bool = True
) -> tuple[float, float]:
    """Automated scaling window: drop the first and last 15 percent of the
    log-time range, then keep the longest contiguous stretch on which the
    observable is monotone (nonincreasing by default).

    Any fixed run has transient and saturation regimes; the window isolates
    the stretch in between and is overridable by the caller.
    """
    pos = times > 0.0
    times, values = times[pos], values[pos]
    if times.size < 6:
        raise AnalysisError("window selection needs at least 6 positive-time snapshots")
    logt = np.log(times)
    lo = logt[0] + 0.15 * (logt[-1] - logt[0])
    hi = logt[-1] - 0.15 * (logt[-1] - logt[0])
    keep = (logt >= lo) & (logt <= hi)
    t_k, v_k = times[keep], values[keep]
    if t_k.size < 2:
        raise AnalysisError("window selection left fewer than 2 snapshots")
    step_ok = np.diff(v_k) <= 0.0 if decreasing else np.diff(v_k) >= 0.0
    return _longest_true_run(t_k, step_ok)


def _longest_true_run(t_k: np.ndarray, step_ok: np.ndarray) -> tuple[float, float]:
    best_len, best = 0, (0, 0)
    start = 0
    for i, ok in enumerate(step_ok):
        if not ok:
            start = i + 1
            continue
        if i + 1 - start + 1 > best_len:
            best_len = i + 1 - start + 1
            best = (start, i + 1)
    if best_len < 2:
        raise AnalysisError("no monotone stretch found for the scaling window")
    return float(t_k[best[0]]), float(t_k[best[1]])


def _window_mask(times: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise AnalysisError("fit window must satisfy t_lo < t_hi")
    return (times >= t_lo) & (times <= t_hi) & (times > 0.0)


FIT_OBSERVABLES = ("diameter", "sup_factor", "curvature")


def fit_line(
    observable: str,
    times: np.ndarray,
    values: np.ndarray,
    window: tuple[float, float] | None = None,
    *,
    min_points: int = 2,
) -> FitResult:
    """Least-squares line for one observable from raw arrays.

    diameter fits values against -ln t; sup_factor and curvature fit
    ln values against ln t (requiring positive values in the window).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if observable not in FIT_OBSERVABLES:
        raise AnalysisError(f"unknown fit observable '{observable}'")
    if window is None:
        window = select_window(times, values)
    mask = _window_mask(times, window)
    if np.count_nonzero(mask) < min_points:
        raise AnalysisError(
            f"{observable} fit needs at least {min_points} snapshots in the window"
        )
    if observable == "diameter":
        x, y = -np.log(times[mask]), values[mask]
    else:
        if np.any(values[mask] <= 0.0):
            raise AnalysisError(f"{observable} fit needs positive values in the window")
        x, y = np.log(times[mask]), np.log(values[mask])
    slope, intercept, r2 = _linear_fit(x, y)
    return FitResult(observable, slope, intercept, r2, window)


def fit_diameter_law(series: TimeSeries, window: tuple[float, float] | None = None) -> FitResult:
    """Fit dist_half against -ln t; a logarithmic contraction shows up as a
    positive slope with high r squared.  Needs at least 6 window snapshots."""
    dist = np.array([row.dist_half for row in series.diagnostics])
    return fit_line("diameter", series.times, dist, window, min_points=6)


def fit_sup_factor_exponent(
    series: TimeSeries, window: tuple[float, float] | None = None
) -> FitResult:
    """Fit ln sup_{r<=1/2} u against ln t; the slope estimates the decay
    exponent of the factor's sup."""
    sup = np.array([row.sup_u_half for row in series.diagnostics])
    return fit_line("sup_factor", series.times, sup, window)


@dataclass(frozen=True)
class BlowupFit:
    """Curvature blow-up fit plus the backward-in-time growth flag."""

    fit: FitResult
    t_sup_K_increases_backward: bool  # t * sup|K| grows as t decreases


def fit_curvature_blowup(
    series: TimeSeries, window: tuple[float, float] | None = None
) -> BlowupFit:
    """Fit ln sup_{r<=1/2} |K| against ln t and report whether t * sup|K|
    increases as t decreases through the window (blow-up faster than 1/t)."""
    times = series.times
    sup_k = np.array([row.sup_abs_K for row in series.diagnostics])
    fit = fit_line("curvature", times, sup_k, window)
    mask = _window_mask(times, fit.window)
    product = times[mask] * sup_k[mask]
    increases = bool(np.all(np.diff(product) < 0.0))  # decreasing in forward time
    return BlowupFit(fit, increases)


BEYOND_HORIZON = math.inf


def persistence_time(series: TimeSeries, r_probe: float) -> float:
    """First time at which the factor at the probe radius has dropped one
    unit below its initial value (linear interpolation between snapshots).

    Returns math.inf ("beyond horizon") when the drop never happens inside
    the series.  The probe is taken at the grid node nearest r_probe; the
    series must start at its initial data (t = 0 snapshot).
    """
    if not series.snapshots:
        raise AnalysisError("persistence probe needs a nonempty series")
    grid = series.snapshots[0][1].grid
    idx = grid.index_at(r_probe)
    t0, u0 = series.snapshots[0]
    threshold = u0.values[idx] - 1.0
    prev_t, prev_v = t0, float(u0.values[idx])
    for t, field in series.snapshots[1:]:
        v = float(field.values[idx])
        if v < threshold:
            return prev_t + (prev_v - threshold) * (t - prev_t) / (prev_v - v)
        prev_t, prev_v = t, v
    return BEYOND_HORIZON


def convex_profile(x):
    """Convex plateau profile: 0 for x <= -1, (x + 1)^2 / 4 on (-1, 1),
    x for x >= 1.  C^1 with profile'' >= 0 a.e."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= -1.0, 0.0, np.where(x >= 1.0, x, 0.25 * (x + 1.0) ** 2))
    return float(out) if out.ndim == 0 else out


def area_weights(grid, region_r: float) -> np.ndarray:
    """Finite-volume cell areas (flat chart, dA = 2 pi r dr) for the cells
    tiling [0, region_r]; they sum to pi region_r^2 exactly."""
    if region_r > grid.r_max * (1.0 + 1e-12):
        raise AnalysisError(f"region radius {region_r} exceeds the grid ({grid.r_max})")
    if region_r <= 0.0:
        raise AnalysisError("region radius must be positive")
    half = grid.h / 2.0
    left = np.minimum(np.maximum(grid.r - half, 0.0), region_r)
    right = np.minimum(grid.r + half, region_r)
    return np.pi * np.maximum(right**2 - left**2, 0.0)


def monotone_functional(u: Field, M: float, region_r: float) -> float:
    """Convex functional int_{r <= region_r} profile(M - u) dA on the flat
    chart.

    Along any flow whose boundary keeps u >= M + 1 at r = region_r (the
    caller checks this precondition) the value is nonincreasing in time.
    The finite-volume quadrature here pairs exactly with the flux form of
    the discrete Laplacian, so the decay holds step by step for the
    implicit solver up to solve tolerance.
    """
    w = area_weights(u.grid, region_r)
    return float(np.sum(w * convex_profile(M - u.values)))
