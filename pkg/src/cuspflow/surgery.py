"""Cusp truncation and the cutoff-glue construction.

Truncation caps a puncture-divergent factor a at a level k through a concave
transition profile psi:

    u_k = psi(a - k) + k,

so u_k = a where a <= k - 1, u_k = k where a >= k + 1, and the metric extends
smoothly across the puncture.  The glue construction interpolates a factor
into the exact cusp across the annulus 1/2 < r < 3/4 with a plateau cutoff,
which is what the Yau-Schwarz lower-bound argument consumes.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Field, RadialGrid, laplacian
from .metrics import (
    DIVERGENT_KINDS,
    MetricSpec,
    cusp_factor,
    eval_factor,
    gauss_curvature,
    sample,
)


class SurgeryError(ValueError):
    """Invalid truncation or glue input."""


PSI_CONCAVE_QUADRATIC = "concave_quadratic"


@dataclass(frozen=True)
class TruncationParams:
    """Truncation level plus the transition profile choice.

    Only the concave quadratic profile is implemented (its C^{1,1}
    regularity is all the curvature case analysis needs), so psi_id exists
    to pin the choice explicitly.
    """

    k: float
    psi_id: str = PSI_CONCAVE_QUADRATIC

    def __post_init__(self):
        if self.k < 1.0:
            raise SurgeryError(f"truncation level k must be >= 1, got {self.k}")
        if self.psi_id != PSI_CONCAVE_QUADRATIC:
            raise SurgeryError(f"unknown transition profile '{self.psi_id}'")


def psi(x):
    """Concave transition profile: x for x <= -1, -(x - 1)^2 / 4 on (-1, 1),
    0 for x >= 1.  C^1 everywhere, psi'' <= 0 a.e., psi' in [0, 1]."""
    x = np.asarray(x, dtype=float)
    out = np.where(x <= -1.0, x, np.where(x >= 1.0, 0.0, -0.25 * (x - 1.0) ** 2))
    return float(out) if out.ndim == 0 else out


def cap_edge_radius(k: float) -> float:
    """Radius below which the cusp factor exceeds k + 1 (the flat cap of
    truncate at level k), i.e. the root of r (-ln r) = e^{-(k+1)}."""
    return _cusp_level_radius(k + 1.0)


def transition_outer_radius(k: float) -> float:
    """Radius beyond which truncate at level k leaves the cusp untouched,
    i.e. the root of r (-ln r) = e^{-(k-1)}."""
    return _cusp_level_radius(k - 1.0)


def _cusp_level_radius(level: float) -> float:
    # Solve r (-ln r) = e^{-level} on (0, 1/e) by fixed point r = e^{-level}/s.
    # The cusp factor never dips below 1 (its minimum, at r = 1/e), so for
    # level <= 1 the whole inner disc lies above the level: return 1/e.
    if level <= 1.0:
        return float(np.exp(-1.0))
    target = np.exp(-level)
    r = target
    for _ in range(200):
        r_new = target / (-np.log(r))
        if abs(r_new - r) <= 1e-16 * r_new:
            r = r_new
            break
        r = r_new
    return float(r)


def adapted_grid(k: float, n_nodes: int = 2049, span: float = 3.0) -> RadialGrid:
    """Grid sized to resolve the truncation transition of the cusp at level k
    (cap and transition cover the first ~1/span of the nodes)."""
    return RadialGrid(n_nodes, min(span * transition_outer_radius(k), 0.9))


def truncate(a, k, grid: RadialGrid | None = None) -> Field:
    """Cap the factor a at level k: u_k = psi(a - k) + k sampled on the grid.

    a may be a Field or a puncture-divergent MetricSpec (cusp, band); in the
    latter case the origin node takes the divergent limit u_k(0) = k.  The
    level may be a plain number or a TruncationParams.
    """
    if isinstance(k, TruncationParams):
        k = k.k
    if k < 1.0:
        raise SurgeryError(f"truncation level k must be >= 1, got {k}")
    if isinstance(a, Field):
        return a.with_values(psi(a.values - k) + k)
    if not isinstance(a, MetricSpec):
        raise SurgeryError("a must be a Field or a MetricSpec")
    if a.kind not in DIVERGENT_KINDS:
        raise SurgeryError(
            "truncation of a closed-form metric requires a factor that "
            f"diverges at the puncture, got kind '{a.kind}'"
        )
    if grid is None:
        raise SurgeryError("truncating a MetricSpec requires a grid")
    vals = np.empty(grid.n_nodes)
    vals[1:] = psi(eval_factor(a, grid.r[1:]) - k) + k
    vals[0] = k
    return Field(grid, vals)


@dataclass(frozen=True)
class TruncationReport:
    """Check results for one truncated factor u_k against its input a."""

    k: float
    curvature_bound: float            # M with K(a) >= -M
    equal_outside_radius: float       # u_k == a at every node beyond this radius
    max_excess_over_input: float      # max(u_k - a); ordering wants <= 0
    cap_min: float                    # min of u_k over the flat cap
    cap_value_error: float            # |cap_min - k|
    cap_curvature_max_abs: float      # max |K(u_k)| strictly inside the cap
    untouched_curvature_max_dev: float  # max |K(u_k) - K(a)| strictly outside
    curvature_min: float              # min K(u_k) over interior nodes
    curvature_floor: float            # -e^2 M
    ordering_ok: bool
    cap_level_ok: bool
    cap_flat_ok: bool
    untouched_ok: bool
    floor_ok: bool

    @property
    def passed(self) -> bool:
        return (
            self.ordering_ok
            and self.cap_level_ok
            and self.cap_flat_ok
            and self.untouched_ok
            and self.floor_ok
        )


def verify_truncation(
    u_k: Field,
    a,
    k: float,
    M: float,
    *,
    curvature_tol: float = 0.05,
    identity_tol: float = 1e-6,
) -> TruncationReport:
    """Check the defining properties of a truncated factor.

    a may be a Field on the same grid or a puncture-divergent MetricSpec
    (sampled internally with the divergent-origin convention).  Regions are
    classified from a: cap where a >= k + 1, untouched where a <= k - 1.
    The flat-cap and untouched identity checks skip one node on each side of
    a region boundary (the stencil straddles the seam there); the curvature
    floor K >= -e^2 M - curvature_tol is enforced at every interior node.
    """
    grid = u_k.grid
    if isinstance(a, Field):
        if a.grid is not grid and (a.grid.n_nodes != grid.n_nodes or a.grid.r_max != grid.r_max):
            raise SurgeryError("u_k and a live on different grids")
        a_vals = a.values.copy()
        a_lap = laplacian(a).values
    elif isinstance(a, MetricSpec) and a.kind in DIVERGENT_KINDS:
        a_vals = np.empty(grid.n_nodes)
        a_vals[1:] = eval_factor(a, grid.r[1:])
        a_vals[0] = np.inf
        finite = Field(grid, np.concatenate(([a_vals[1]], a_vals[1:])))
        a_lap = laplacian(finite).values
    else:
        raise SurgeryError("a must be a Field or a puncture-divergent MetricSpec")

    cap = a_vals >= k + 1.0
    untouched = a_vals <= k - 1.0
    interior = np.zeros(grid.n_nodes, dtype=bool)
    interior[1:-1] = True
    interior[0] = True  # origin stencil is second order

    k_u = gauss_curvature(u_k).values
    k_a = -np.exp(-2.0 * np.where(np.isfinite(a_vals), a_vals, 0.0)) * a_lap

    margin_cap = cap & _away_from_region_edge(cap)
    margin_untouched = untouched & _away_from_region_edge(untouched)

    finite_a = np.isfinite(a_vals)
    excess = np.max((u_k.values - a_vals)[finite_a])

    if np.any(cap):
        cap_min = float(np.min(u_k.values[cap]))
    else:
        cap_min = float("nan")
    cap_value_error = abs(cap_min - k) if np.any(cap) else float("inf")

    sel_cap = margin_cap & interior
    cap_curv = float(np.max(np.abs(k_u[sel_cap]))) if np.any(sel_cap) else 0.0

    sel_un = margin_untouched & interior & finite_a
    untouched_dev = float(np.max(np.abs((k_u - k_a)[sel_un]))) if np.any(sel_un) else 0.0

    curv_min = float(np.min(k_u[interior]))
    floor = -np.exp(2.0) * M

    # Radius beyond which u_k agrees with a at every node (up to the float
    # round trip of psi(a - k) + k, which perturbs the last ulp).
    gap = np.abs(u_k.values - np.where(finite_a, a_vals, np.inf))
    differs = gap > 1e-12 * np.maximum(1.0, np.abs(u_k.values))
    idx = int(np.max(np.nonzero(differs)[0])) if np.any(differs) else -1
    equal_radius = float(grid.r[idx]) if idx >= 0 else 0.0

    return TruncationReport(
        k=float(k),
        curvature_bound=float(M),
        equal_outside_radius=equal_radius,
        max_excess_over_input=float(excess),
        cap_min=cap_min,
        cap_value_error=float(cap_value_error),
        cap_curvature_max_abs=cap_curv,
        untouched_curvature_max_dev=untouched_dev,
        curvature_min=curv_min,
        curvature_floor=float(floor),
        ordering_ok=bool(excess <= identity_tol),
        cap_level_ok=bool(cap_value_error <= identity_tol),
        cap_flat_ok=bool(cap_curv <= identity_tol),
        untouched_ok=bool(untouched_dev <= identity_tol),
        floor_ok=bool(curv_min >= floor - curvature_tol),
    )


def _away_from_region_edge(mask: np.ndarray) -> np.ndarray:
    """Nodes of the mask whose immediate neighbours are also in the mask."""
    inner = mask.copy()
    inner[:-1] &= mask[1:]
    inner[1:] &= mask[:-1]
    return inner


def measured_lower_curvature_bound(spec: MetricSpec, grid: RadialGrid, r_min: float = 0.0) -> float:
    """Magnitude M of the lower curvature bound K >= -M of a closed-form
    factor, measured discretely on the nodes with r >= r_min.

    The truncation case analysis only consumes the input's bound where the
    profile bites (a <= k + 1), so callers pass the cap edge as r_min to
    keep the under-resolved innermost nodes out of the measurement.
    """
    field = sample(spec, grid)
    K = gauss_curvature(field).values
    mask = (grid.r >= r_min)
    mask[:4] = False
    mask[-4:] = False
    if not np.any(mask):
        raise SurgeryError("no nodes available to measure the curvature bound")
    return max(1.0, float(-np.min(K[mask])))


def default_bump(r):
    """C^1 cutoff with plateau 1 on r <= 1/2 and support r <= 3/4
    (a smoothstep composed with itself on the transition)."""
    x = np.clip((np.asarray(r, dtype=float) - 0.5) / 0.25, 0.0, 1.0)
    s = x * x * (3.0 - 2.0 * x)
    s = s * s * (3.0 - 2.0 * s)
    out = 1.0 - s
    return float(out) if out.ndim == 0 else out


def glue_hyperbolic(a: Field, phi=default_bump) -> Field:
    """Interpolate a into the exact cusp: alpha = phi a + (1 - phi) v.

    phi must be a cutoff equal to 1 on r <= 1/2 and 0 on r >= 3/4 with values
    in [0, 1]; the result equals a on the inner plateau and the cusp factor v
    beyond the support.
    """
    r = a.grid.r
    w = np.asarray(phi(r), dtype=float)
    if np.any((w < 0.0) | (w > 1.0)):
        raise SurgeryError("cutoff must take values in [0, 1]")
    if np.any(w[r <= 0.5] != 1.0):
        raise SurgeryError("cutoff must equal 1 on r <= 1/2")
    if np.any(w[r >= 0.75] != 0.0):
        raise SurgeryError("cutoff must vanish on r >= 3/4")
    vals = a.values.copy()
    outer = w < 1.0
    vals[outer] = w[outer] * a.values[outer] + (1.0 - w[outer]) * cusp_factor(r[outer])
    return a.with_values(vals)


@dataclass(frozen=True)
class SchwarzReport:
    """Result of the lower-bound inequality v <= (1/2) ln beta + alpha."""

    beta: float
    margin: float      # max over r > 0 of v - alpha - (1/2) ln beta
    worst_r: float
    holds: bool


def schwarz_check(alpha: Field, beta: float, *, slack: float = 1e-9) -> SchwarzReport:
    """Check v <= (1/2) ln beta + alpha at all nodes with r > 0.

    beta >= 1 must be a verified magnitude of a lower curvature bound for
    e^{2 alpha} |dz|^2 (K >= -beta), e.g. measured through gauss_curvature.
    """
    if beta < 1.0:
        raise SurgeryError(f"beta must be >= 1, got {beta}")
    r = alpha.grid.r[1:]
    gap = cusp_factor(r) - alpha.values[1:] - 0.5 * np.log(beta)
    i = int(np.argmax(gap))
    return SchwarzReport(
        beta=float(beta),
        margin=float(gap[i]),
        worst_r=float(r[i]),
        holds=bool(gap[i] <= slack),
    )
