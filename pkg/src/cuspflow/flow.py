"""Time evolution of the conformal factor under u_t = e^{-2u} lap u on the
disc, with frozen Dirichlet data at r_max, plus exact reference solutions.

Each step solves the backward-Euler system

    w - u - dt e^{-2w} lap w = 0

by damped Newton iteration on the tridiagonal linearization (the diffusivity
e^{-2u} spans many orders of magnitude as a cusp contracts, so explicit
stepping is impractical).  Adaptive step control doubles and halves dt from
a step-doubling error estimate; snapshot times are hit exactly by clipping.

An annulus mode pins an inner block of nodes to prescribed data, which the
exact-solution regressions use to keep r = 0 out of the domain of the cusp.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from . import analysis
from .grid import Field, laplacian_values
from .metrics import MetricDomainError, cusp_factor, sphere_profile

DT_FLOOR = 1e-12


class SolverError(RuntimeError):
    """Time stepping failed."""


class NewtonError(SolverError):
    """Newton iteration failed to converge; the step size is too large."""


@dataclass(frozen=True)
class SolverConfig:
    dt_init: float = 1e-6
    dt_max: float = 1e-3
    newton_tol: float = 1e-10
    newton_max_iters: int = 12
    error_tol: float = 1e-6

    def __post_init__(self):
        for name in ("dt_init", "dt_max", "newton_tol", "error_tol"):
            if getattr(self, name) <= 0.0:
                raise SolverError(f"SolverConfig.{name} must be positive")
        if self.newton_max_iters < 4:
            raise SolverError("newton_max_iters must be >= 4")
        if self.error_tol < 1e-13:
            # Below double-precision resolution the step-doubling estimate is
            # pure roundoff and the controller would accept no-op steps.
            raise SolverError("error_tol must be >= 1e-13")
        if self.dt_init < DT_FLOOR:
            raise SolverError(f"dt_init must be >= {DT_FLOOR:g}")


@dataclass(frozen=True)
class FlowState:
    u: Field
    t: float
    bc_value: float
    step_count: int = 0
    last_dt: float = 0.0


def init_state(u0: Field, bc_mode: str = "freeze") -> FlowState:
    """State at t = 0 with the Dirichlet value frozen at u0(r_max)."""
    if bc_mode != "freeze":
        raise SolverError(f"unknown boundary mode '{bc_mode}'")
    return FlowState(u=u0, t=0.0, bc_value=float(u0.values[-1]))


def _implicit_step(
    u_old: np.ndarray,
    dt: float,
    h: float,
    r: np.ndarray,
    cfg: SolverConfig,
    active: np.ndarray,
    target: np.ndarray,
) -> np.ndarray:
    """Backward-Euler update: active nodes solve the implicit residual,
    inactive nodes are pinned to target."""
    inactive = ~active
    w = u_old.copy()
    w[inactive] = target[inactive]

    def residual(wv: np.ndarray) -> np.ndarray:
        F = wv - u_old - dt * np.exp(-2.0 * wv) * laplacian_values(wv, h, r)
        F[inactive] = wv[inactive] - target[inactive]
        return F

    F = residual(w)
    res = float(np.max(np.abs(F)))
    for _ in range(cfg.newton_max_iters):
        if res <= cfg.newton_tol:
            return w
        ab = _banded_jacobian(w, dt, h, r, active)
        delta = solve_banded((1, 1), ab, -F)
        lam = 1.0
        while True:
            w_try = w + lam * delta
            F_try = residual(w_try)
            res_try = float(np.max(np.abs(F_try)))
            if res_try < res or res_try <= cfg.newton_tol:
                break
            lam *= 0.5
            if lam < 2.0**-12:
                raise NewtonError("Newton line search stalled; reduce dt")
        w, F, res = w_try, F_try, res_try
    if res <= cfg.newton_tol:
        return w
    raise NewtonError(
        f"Newton did not reach tol {cfg.newton_tol:g} in "
        f"{cfg.newton_max_iters} iterations (residual {res:.3e}); reduce dt"
    )


def _banded_jacobian(
    w: np.ndarray, dt: float, h: float, r: np.ndarray, active: np.ndarray
) -> np.ndarray:
    """Tridiagonal Jacobian of the implicit residual in solve_banded layout."""
    n = w.size
    lap = laplacian_values(w, h, r)
    E = dt * np.exp(-2.0 * w)
    diag = 1.0 + 2.0 * E * lap + 2.0 * E / h**2
    upper = np.zeros(n)
    lower = np.zeros(n)
    upper[2:] = -E[1:-1] * (1.0 / h**2 + 1.0 / (2.0 * h * r[1:-1]))   # J[i, i+1]
    lower[: n - 2] = -E[1:-1] * (1.0 / h**2 - 1.0 / (2.0 * h * r[1:-1]))  # J[i, i-1]
    # Origin row from the mean-value stencil 4 (w_1 - w_0) / h^2.
    diag[0] = 1.0 + 2.0 * E[0] * lap[0] + 4.0 * E[0] / h**2
    upper[1] = -4.0 * E[0] / h**2
    # Pinned rows are the identity.
    inactive = ~active
    diag[inactive] = 1.0
    upper[1:][inactive[:-1]] = 0.0
    lower[:-1][inactive[1:]] = 0.0
    return np.vstack([upper, diag, lower])


def step(
    state: FlowState,
    dt: float,
    cfg: SolverConfig,
    *,
    outer_value: float | None = None,
    n_inner: int = 0,
    inner_values: np.ndarray | None = None,
) -> FlowState:
    """Advance one backward-Euler step of size dt.

    outer_value overrides the frozen Dirichlet value at r_max for this step
    (annulus regressions drive it with exact data); n_inner > 0 pins the
    first n_inner nodes to inner_values.  Raises NewtonError when the
    iteration does not converge, which signals that dt is too large.
    """
    if dt <= 0.0:
        raise SolverError(f"dt must be positive, got {dt}")
    g = state.u.grid
    active = np.ones(g.n_nodes, dtype=bool)
    active[-1] = False
    target = np.zeros(g.n_nodes)
    target[-1] = state.bc_value if outer_value is None else float(outer_value)
    if n_inner:
        if inner_values is None or len(inner_values) != n_inner:
            raise SolverError("inner_values must provide one value per pinned node")
        active[:n_inner] = False
        target[:n_inner] = inner_values
    w = _implicit_step(state.u.values, dt, g.h, g.r, cfg, active, target)
    return FlowState(
        u=state.u.with_values(w),
        t=state.t + dt,
        bc_value=state.bc_value,
        step_count=state.step_count + 1,
        last_dt=dt,
    )


@dataclass(frozen=True)
class BoundaryDriver:
    """Time-dependent Dirichlet data for a run.

    outer(t) gives the value at r_max; when n_inner > 0, inner(r, t) gives
    the values pinned on the first n_inner nodes.  A None driver freezes the
    outer value and pins nothing (the default disc mode).
    """

    outer: object = None          # callable t -> float, or None to freeze
    n_inner: int = 0
    inner: object = None          # callable (r_array, t) -> values

    def values_at(self, state: FlowState, t: float) -> tuple[float | None, np.ndarray | None]:
        outer = None if self.outer is None else float(self.outer(t))
        inner = None
        if self.n_inner:
            inner = np.asarray(self.inner(state.u.grid.r[: self.n_inner], t), dtype=float)
        return outer, inner


@dataclass(frozen=True)
class FunctionalProbe:
    """Track the convex monotone functional at every accepted step."""

    level: float
    region_r: float


def run(
    u0: Field,
    t_end: float,
    cfg: SolverConfig,
    snapshot_times,
    *,
    boundary: BoundaryDriver | None = None,
    run_id: str = "run",
    probe: FunctionalProbe | None = None,
) -> analysis.TimeSeries:
    """Evolve a single initial factor; see run_family for the contract."""
    return run_family(
        [u0], t_end, cfg, snapshot_times,
        boundaries=None if boundary is None else [boundary],
        run_ids=[run_id], probe=probe,
    )[0]


def run_family(
    u0s: list[Field],
    t_end: float,
    cfg: SolverConfig,
    snapshot_times,
    *,
    boundaries: list[BoundaryDriver] | None = None,
    run_ids: list[str] | None = None,
    probe: FunctionalProbe | None = None,
) -> list[analysis.TimeSeries]:
    """Evolve a family of initial factors through a shared adaptive time grid.

    All members advance in lockstep: a proposed dt is accepted only when the
    step-doubling error estimate of every member stays at or below
    error_tol, and any Newton failure halves dt for the whole family.  The
    shared grid keeps the implicit scheme's discrete comparison principle
    exact across members, so ordered initial data stay ordered.

    Returns one TimeSeries per member with the t = 0 state included as the
    first snapshot and per-snapshot diagnostics rows.  Raises SolverError
    when dt underflows below 1e-12.
    """
    snapshot_times = [float(t) for t in snapshot_times]
    if any(b <= a for a, b in zip(snapshot_times, snapshot_times[1:])):
        raise SolverError("snapshot times must be strictly increasing")
    if any(not 0.0 < t <= t_end for t in snapshot_times):
        raise SolverError("snapshot times must lie in (0, t_end]")
    if t_end <= 0.0:
        raise SolverError("t_end must be positive")
    m = len(u0s)
    if boundaries is None:
        boundaries = [BoundaryDriver() for _ in range(m)]
    if run_ids is None:
        run_ids = [f"run{i}" for i in range(m)]

    states = [init_state(u0) for u0 in u0s]
    snaps: list[list[tuple[float, Field]]] = [[(0.0, u0)] for u0 in u0s]
    traces: list[list[tuple[float, float]]] = [[] for _ in range(m)]
    if probe is not None:
        for i, u0 in enumerate(u0s):
            traces[i].append((0.0, analysis.monotone_functional(u0, probe.level, probe.region_r)))

    stops = sorted(set(snapshot_times) | {t_end})
    dt_pref = cfg.dt_init
    t = 0.0
    stop_idx = 0
    while t < t_end - DT_FLOOR:
        t_stop = stops[stop_idx]
        dt_try = min(dt_pref, cfg.dt_max, t_stop - t)
        while True:
            if dt_try < DT_FLOOR:
                raise SolverError(f"dt underflow below {DT_FLOOR:g} at t = {t:.6e}")
            try:
                news, err = _family_attempt(states, dt_try, cfg, boundaries)
            except NewtonError:
                dt_try *= 0.5
                continue
            if err <= cfg.error_tol:
                break
            dt_try *= 0.5
        states = news
        t = states[0].t
        hit_stop = abs(t - t_stop) <= 1e-9 * max(1.0, t_stop)
        if hit_stop:
            t = t_stop
            states = [replace(s, t=t_stop) for s in states]
        if probe is not None:
            for i, s in enumerate(states):
                traces[i].append(
                    (t, analysis.monotone_functional(s.u, probe.level, probe.region_r))
                )
        if hit_stop:
            if t_stop in snapshot_times:
                for i, s in enumerate(states):
                    snaps[i].append((t_stop, s.u))
            stop_idx += 1
        grow = 0.9 * np.sqrt(cfg.error_tol / max(err, 1e-300))
        dt_pref = min(cfg.dt_max, dt_try * float(np.clip(grow, 0.3, 2.0)))

    out = []
    for i in range(m):
        rows = [
            _diagnostics_row(t_i, field, probe)
            for t_i, field in snaps[i]
        ]
        out.append(
            analysis.TimeSeries(
                run_id=run_ids[i],
                snapshots=snaps[i],
                diagnostics=rows,
                step_functional=traces[i],
            )
        )
    return out


def _family_attempt(states, dt, cfg, boundaries):
    """One lockstep attempt: full step vs two half steps for every member."""
    news = []
    err = 0.0
    for state, bdry in zip(states, boundaries):
        t0 = state.t
        o_mid, i_mid = bdry.values_at(state, t0 + 0.5 * dt)
        o_end, i_end = bdry.values_at(state, t0 + dt)
        big = step(state, dt, cfg, outer_value=o_end,
                   n_inner=bdry.n_inner, inner_values=i_end)
        half = step(state, 0.5 * dt, cfg, outer_value=o_mid,
                    n_inner=bdry.n_inner, inner_values=i_mid)
        fine = step(half, 0.5 * dt, cfg, outer_value=o_end,
                    n_inner=bdry.n_inner, inner_values=i_end)
        err = max(err, float(np.max(np.abs(big.u.values - fine.u.values))))
        news.append(replace(fine, step_count=state.step_count + 1, last_dt=dt))
    return news, err


def _diagnostics_row(t: float, field: Field, probe) -> analysis.DiagnosticsRow:
    sup_abs_k, min_k = analysis.curvature_extremes(field)
    functional = (
        analysis.monotone_functional(field, probe.level, probe.region_r)
        if probe is not None
        else float("nan")
    )
    try:
        dist = analysis.distance_to_half(field)
    except analysis.AnalysisError:  # grid ends before r = 1/2
        dist = float("nan")
    return analysis.DiagnosticsRow(
        t=t,
        sup_u_half=analysis.sup_u_half(field),
        dist_half=dist,
        sup_abs_K=sup_abs_k,
        min_K=min_k,
        functional_value=functional,
    )


def exact_solution(name: str, r, t: float, *, lam: float = 1.0, c: float = 0.0):
    """Closed-form reference flows.

    flat:   u = c for all time.
    cusp:   v(r) + (1/2) ln(1 + 2t) on 0 < r < 1 (the flow that keeps the
            cusp; exact solution of the radial equation).
    sphere: sphere_profile(r / lam) - ln lam + (1/2) ln(1 - 2t) for t < 1/2.
    """
    r_arr = np.asarray(r, dtype=float)
    if name == "flat":
        out = np.full_like(r_arr, c)
    elif name == "cusp":
        if 1.0 + 2.0 * t <= 0.0:
            raise MetricDomainError("cusp solution requires 1 + 2t > 0")
        out = cusp_factor(r_arr) + 0.5 * np.log1p(2.0 * t)
    elif name == "sphere":
        if t >= 0.5:
            raise MetricDomainError("sphere solution exists for t < 1/2")
        if lam <= 0.0:
            raise MetricDomainError("sphere dilation must be positive")
        out = sphere_profile(r_arr / lam) - np.log(lam) + 0.5 * np.log1p(-2.0 * t)
    else:
        raise MetricDomainError(f"unknown exact solution '{name}'")
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out
