"""Analytic barrier functions and machine-checkable comparison certificates.

Two upper barriers dominate any flow started below the hyperbolic cusp:

  * the static envelope  v(r) + (1/2) ln(1 + 2t), the exact cusp solution;

  * the moving cap U(r, t): a dilated spherical factor

        S(r, t) = ln(2 / (1 + (r/lam)^2)) - ln[lam (-ln lam)] + (1/2) ln 3,
        lam(t) = e^{-6/t},

    glued continuously onto the static bound h(r) = v(r) + (1/2) ln 3 at
    r = lam(t).  On the cap the diffusion term satisfies the exact identity
    e^{-2S} lap S = -12 / t^2 while dS/dt >= -6/t^2 + 1/t, so U is a strict
    supersolution with residual at least 6 / t^2.

Checks report the worst violation margin of a sampled factor against a
barrier; 1e-6 of absolute slack absorbs stencil and time-stepping error.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .grid import Field
from .metrics import cusp_factor, sphere_profile

if TYPE_CHECKING:  # pragma: no cover
    from .analysis import TimeSeries

BARRIER_SLACK = 1e-6
LN3 = float(np.log(3.0))


class BarrierDomainError(ValueError):
    """Barrier evaluated outside its domain of validity."""


def lambda_of_t(t: float) -> float:
    """Cap radius lam(t) = e^{-6/t}; underflows to 0 below t ~ 0.0085."""
    if t <= 0.0:
        raise BarrierDomainError(f"lam(t) requires t > 0, got {t}")
    return float(np.exp(-6.0 / t))


def static_upper(r, t: float):
    """Static envelope v(r) + (1/2) ln(1 + 2t) for flows started below the cusp."""
    return cusp_factor(r) + 0.5 * np.log1p(2.0 * t)


def barrier_h(r):
    """Static piece h(r) = v(r) + (1/2) ln 3 of the moving-cap barrier."""
    return cusp_factor(r) + 0.5 * LN3


def _check_time(t: float) -> None:
    if not 0.0 < t <= 1.0:
        raise BarrierDomainError(f"moving-cap barrier requires t in (0, 1], got {t}")


def _cap_x(r: float, t: float) -> float:
    # x = r / lam(t) computed in log space; requires r inside the cap.
    if r == 0.0:
        return 0.0
    return float(np.exp(-(-np.log(r) - 6.0 / t)))


def barrier_S(r: float, t: float) -> float:
    """Spherical cap piece S(r, t); valid for 0 <= r inside the cap region."""
    _check_time(t)
    x = _cap_x(r, t)
    return float(sphere_profile(x) + 6.0 / t - np.log(6.0 / t) + 0.5 * LN3)


def barrier_U(r: float, t: float) -> float:
    """Piecewise moving-cap barrier: S(r, t) for r < lam(t), h(r) beyond.

    Continuous across the seam since S(lam, t) = h(lam).  The branch test is
    done on -ln r so small t never underflows.
    """
    _check_time(t)
    if not 0.0 <= r < 1.0:
        raise BarrierDomainError(f"barrier requires 0 <= r < 1, got {r}")
    if r == 0.0 or -np.log(r) > 6.0 / t:
        return barrier_S(r, t)
    return float(barrier_h(r))


def cap_diffusion_term(r: float, t: float) -> float:
    """Diffusion term e^{-2S} lap S on the cap, evaluated from the closed-form
    derivatives of the spherical profile (it equals -12 / t^2 identically).

    The prefactor e^{-2S} / lam^2 is regrouped as
    e^{-2 sphere_profile(x)} (6/t)^2 / 3 so small t cannot overflow.
    """
    _check_time(t)
    _require_in_cap(r, t)
    x = _cap_x(r, t)
    sp1 = -2.0 * x / (1.0 + x * x)
    sp2 = (2.0 * x * x - 2.0) / (1.0 + x * x) ** 2
    over_x = sp1 / x if x > 0.0 else -2.0  # limit of s'(x)/x at x = 0
    lap_profile = sp2 + over_x
    return float(lap_profile * np.exp(-2.0 * sphere_profile(x)) * (36.0 / (t * t)) / 3.0)


def supersolution_residual(r: float, t: float) -> float:
    """Supersolution residual dU/dt - e^{-2U} lap U on the cap r < lam(t).

    The time derivative uses the analytic dlam/dt = (6/t^2) lam; the
    diffusion term comes from cap_diffusion_term.  Positive by the margin
    6/t^2 + 1/t.
    """
    _check_time(t)
    _require_in_cap(r, t)
    x = _cap_x(r, t)
    sp1 = -2.0 * x / (1.0 + x * x)
    dilation_term = -x * sp1 * (6.0 / (t * t))  # -(r/lam^2) s'(r/lam) dlam/dt
    ds_dt = dilation_term - 6.0 / (t * t) + 1.0 / t
    return float(ds_dt - cap_diffusion_term(r, t))


def _require_in_cap(r: float, t: float) -> None:
    if r < 0.0:
        raise BarrierDomainError("radius must be nonnegative")
    if r > 0.0 and -np.log(r) <= 6.0 / t:
        raise BarrierDomainError(
            f"r = {r} lies outside the cap r < lam(t) = e^{{-6/t}} at t = {t}"
        )


@dataclass(frozen=True)
class ViolationReport:
    """Worst margin of a sampled factor against a barrier at one time."""

    check: str
    t: float
    worst_r: float
    margin: float
    passed: bool


STATIC_UPPER = "static_upper"
MOVING_CAP = "moving_cap"
RATE_BOUND = "rate_bound"


@dataclass(frozen=True)
class BarrierSpec:
    """Tagged choice of upper barrier.

    static_upper is v + (1/2) ln(1+2t); moving_cap is the piecewise U(r, t);
    rate_bound is beta_hat / t on r <= 1/2 with a fitted beta_hat.
    """

    kind: str
    beta_hat: float | None = None

    def __post_init__(self):
        if self.kind not in (STATIC_UPPER, MOVING_CAP, RATE_BOUND):
            raise BarrierDomainError(f"unknown barrier kind '{self.kind}'")
        if self.kind == RATE_BOUND and (self.beta_hat is None or self.beta_hat <= 0.0):
            raise BarrierDomainError("rate_bound barrier needs beta_hat > 0")


def check_barrier(spec: BarrierSpec, u: Field, t: float,
                  *, slack: float = BARRIER_SLACK) -> ViolationReport:
    """Dispatch a sampled factor against the chosen barrier."""
    if spec.kind == STATIC_UPPER:
        return check_static_upper(u, t, slack=slack)
    if spec.kind == MOVING_CAP:
        return check_moving_cap(u, t, slack=slack)
    return check_rate_bound(u, t, spec.beta_hat, slack=slack)


def check_rate_bound(u: Field, t: float, beta_hat: float,
                     *, slack: float = BARRIER_SLACK) -> ViolationReport:
    """Report max over nodes with r <= 1/2 of u - beta_hat / t."""
    if t <= 0.0:
        raise BarrierDomainError(f"rate bound requires t > 0, got {t}")
    mask = u.grid.r <= 0.5
    margin = u.values[mask] - beta_hat / t
    i = int(np.argmax(margin))
    return ViolationReport(
        check=RATE_BOUND,
        t=float(t),
        worst_r=float(u.grid.r[mask][i]),
        margin=float(margin[i]),
        passed=bool(margin[i] <= slack),
    )


def check_static_upper(u: Field, t: float, *, slack: float = BARRIER_SLACK) -> ViolationReport:
    """Report max over nodes with r > 0 of u - [v(r) + (1/2) ln(1 + 2t)].

    Valid for flows started from data at or below the cusp metric (the
    caller asserts the hypothesis).
    """
    r = u.grid.r[1:]
    margin = u.values[1:] - static_upper(r, t)
    i = int(np.argmax(margin))
    return ViolationReport(
        check="static_upper",
        t=float(t),
        worst_r=float(r[i]),
        margin=float(margin[i]),
        passed=bool(margin[i] <= slack),
    )


def check_moving_cap(u: Field, t: float, *, slack: float = BARRIER_SLACK) -> ViolationReport:
    """Report max over all nodes of u - U(r, t); requires t in (0, 1)."""
    _check_time(t)
    r = u.grid.r
    barrier = np.array([barrier_U(float(ri), t) for ri in r])
    margin = u.values - barrier
    i = int(np.argmax(margin))
    return ViolationReport(
        check="moving_cap",
        t=float(t),
        worst_r=float(r[i]),
        margin=float(margin[i]),
        passed=bool(margin[i] <= slack),
    )


def fit_rate_bound(series: "TimeSeries") -> float:
    """Fitted rate constant beta_hat = max over snapshots with t in (0, 1) of
    t * sup_{r <= 1/2} u(r, t), counting only positive sups.

    Flows dominated by the moving cap obey u <= beta_hat / t on r <= 1/2
    with a single finite beta_hat.
    """
    if not series.snapshots:
        raise BarrierDomainError("rate-bound fit needs a nonempty series")
    best = 0.0
    for t, field in series.snapshots:
        if not 0.0 < t < 1.0:
            continue
        sup = float(np.max(field.values[field.grid.r <= 0.5]))
        if sup > 0.0:
            best = max(best, t * sup)
    return best
