"""Experiment configuration: a flat key = value text file, parsed strictly.

Unknown keys are hard errors so a typo cannot silently change an experiment;
every run is reproducible from the file alone.  See DEFAULTS for the full
key schema and the shipped configs/ directory for examples.
"""

from dataclasses import dataclass
from pathlib import Path

from .flow import SolverConfig

KNOWN_CHECKS = (
    "static_upper",
    "moving_cap",
    "rate_bound",
    "comparison",
    "truncation",
    "functional",
)

METRIC_KINDS = ("flat", "sphere", "cigar", "hyperbolic_band", "truncated_cusp")

DEFAULTS: dict[str, object] = {
    "n_nodes": 2049,
    "r_max": 0.9,
    "metric": "truncated_cusp",
    "flat_value": 0.0,
    "sphere_lambda": 1.0,
    "sphere_shift": 0.0,
    "band_delta": 0.1,
    "truncation_levels": (),
    "initial_offset": 0.0,
    "t_end": 0.5,
    "snapshot_times": (),
    "dt_init": 1e-6,
    "dt_max": 1e-3,
    "newton_tol": 1e-10,
    "newton_max_iters": 12,
    "error_tol": 1e-6,
    "checks": ("static_upper", "moving_cap", "rate_bound", "comparison", "functional"),
    "rate_bound_max": 20.0,
    "functional_level": 1.3,
    "functional_radius": None,   # defaults to r_max
    "output_dir": None,
}

_FLOAT_KEYS = {
    "r_max", "flat_value", "sphere_lambda", "sphere_shift", "band_delta",
    "initial_offset", "t_end", "dt_init", "dt_max", "newton_tol", "error_tol",
    "rate_bound_max", "functional_level", "functional_radius",
}
_INT_KEYS = {"n_nodes", "newton_max_iters"}
_LIST_KEYS = {"truncation_levels", "snapshot_times", "checks"}
_STR_KEYS = {"metric", "output_dir"}


class ConfigError(ValueError):
    """Config file missing, malformed, or schema-violating."""


@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: int
    r_max: float
    metric: str
    flat_value: float
    sphere_lambda: float
    sphere_shift: float
    band_delta: float
    truncation_levels: tuple[float, ...]
    initial_offset: float
    t_end: float
    snapshot_times: tuple[float, ...]
    solver: SolverConfig
    checks: tuple[str, ...]
    rate_bound_max: float
    functional_level: float
    functional_radius: float
    output_dir: str | None


def parse_config(path) -> ExperimentConfig:
    """Read and validate a flat key = value config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = dict(DEFAULTS)
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{text}'")
        key, _, value = (part.strip() for part in text.partition("="))
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
        if key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate config key '{key}'")
        seen.add(key)
        raw[key] = _coerce(key, value, path, lineno)
    return _validate(raw)


def _coerce(key: str, value: str, path, lineno: int):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key in _LIST_KEYS:
            items = [v.strip() for v in value.split(",") if v.strip()]
            if key == "checks":
                return tuple(items)
            return tuple(float(v) for v in items)
        if key in _STR_KEYS:
            return value
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {exc}") from None
    raise ConfigError(f"{path}:{lineno}: unhandled key '{key}'")  # pragma: no cover


def _validate(raw: dict) -> ExperimentConfig:
    metric = raw["metric"]
    if metric not in METRIC_KINDS:
        raise ConfigError(
            f"config key 'metric' must be one of {METRIC_KINDS}, got '{metric}'"
        )
    for check in raw["checks"]:
        if check not in KNOWN_CHECKS:
            raise ConfigError(
                f"config key 'checks' contains unknown check '{check}'"
            )
    if metric == "truncated_cusp" and not raw["truncation_levels"]:
        raise ConfigError(
            "config key 'truncation_levels' must be nonempty when metric = truncated_cusp"
        )
    if any(k < 1.0 for k in raw["truncation_levels"]):
        raise ConfigError("config key 'truncation_levels' entries must be >= 1")
    t_end = raw["t_end"]
    if t_end <= 0.0:
        raise ConfigError("config key 't_end' must be positive")
    snaps = raw["snapshot_times"]
    if not snaps:
        raise ConfigError("config key 'snapshot_times' must be nonempty")
    if list(snaps) != sorted(set(snaps)):
        raise ConfigError("config key 'snapshot_times' must be strictly increasing")
    if any(not 0.0 < t <= t_end for t in snaps):
        raise ConfigError("config key 'snapshot_times' entries must lie in (0, t_end]")
    try:
        solver = SolverConfig(
            dt_init=raw["dt_init"],
            dt_max=raw["dt_max"],
            newton_tol=raw["newton_tol"],
            newton_max_iters=raw["newton_max_iters"],
            error_tol=raw["error_tol"],
        )
    except Exception as exc:
        raise ConfigError(f"bad solver settings: {exc}") from None
    functional_radius = raw["functional_radius"]
    if functional_radius is None:
        functional_radius = raw["r_max"]
    if not 0.0 < functional_radius <= raw["r_max"]:
        raise ConfigError("config key 'functional_radius' must lie in (0, r_max]")
    return ExperimentConfig(
        n_nodes=raw["n_nodes"],
        r_max=raw["r_max"],
        metric=metric,
        flat_value=raw["flat_value"],
        sphere_lambda=raw["sphere_lambda"],
        sphere_shift=raw["sphere_shift"],
        band_delta=raw["band_delta"],
        truncation_levels=tuple(raw["truncation_levels"]),
        initial_offset=raw["initial_offset"],
        t_end=t_end,
        snapshot_times=tuple(snaps),
        solver=solver,
        checks=tuple(raw["checks"]),
        rate_bound_max=raw["rate_bound_max"],
        functional_level=raw["functional_level"],
        functional_radius=functional_radius,
        output_dir=raw["output_dir"],
    )
