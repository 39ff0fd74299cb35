"""Conformal Ricci flow on the disc: contracting hyperbolic cusps, barrier
certificates, and decay-law diagnostics."""

from .grid import Field, GridError, RadialGrid, integrate_radial, laplacian
from .metrics import (
    MetricDomainError,
    MetricSpec,
    cusp_distance,
    cusp_factor,
    eval_factor,
    gauss_curvature,
    to_cylinder,
)
from .surgery import (
    SurgeryError,
    TruncationParams,
    glue_hyperbolic,
    psi,
    schwarz_check,
    truncate,
    verify_truncation,
)
from .flow import (
    BoundaryDriver,
    FlowState,
    NewtonError,
    SolverConfig,
    SolverError,
    exact_solution,
    init_state,
    run,
    run_family,
    step,
)
from .barriers import (
    BarrierDomainError,
    BarrierSpec,
    barrier_U,
    check_barrier,
    check_moving_cap,
    check_static_upper,
    fit_rate_bound,
    lambda_of_t,
    supersolution_residual,
)
from .analysis import (
    AnalysisError,
    FitResult,
    TimeSeries,
    distance_to_half,
    fit_curvature_blowup,
    fit_diameter_law,
    fit_sup_factor_exponent,
    monotone_functional,
    persistence_time,
)
from .config import ConfigError, ExperimentConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "AnalysisError",
    "BarrierDomainError",
    "BarrierSpec",
    "BoundaryDriver",
    "ConfigError",
    "ExperimentConfig",
    "Field",
    "FitResult",
    "FlowState",
    "GridError",
    "MetricDomainError",
    "MetricSpec",
    "NewtonError",
    "RadialGrid",
    "SolverConfig",
    "SolverError",
    "SurgeryError",
    "TruncationParams",
    "TimeSeries",
    "barrier_U",
    "check_barrier",
    "check_moving_cap",
    "check_static_upper",
    "cusp_distance",
    "cusp_factor",
    "distance_to_half",
    "eval_factor",
    "exact_solution",
    "fit_curvature_blowup",
    "fit_diameter_law",
    "fit_rate_bound",
    "fit_sup_factor_exponent",
    "gauss_curvature",
    "glue_hyperbolic",
    "init_state",
    "integrate_radial",
    "lambda_of_t",
    "laplacian",
    "monotone_functional",
    "parse_config",
    "persistence_time",
    "psi",
    "run",
    "run_family",
    "schwarz_check",
    "step",
    "supersolution_residual",
    "to_cylinder",
    "truncate",
    "verify_truncation",
]
