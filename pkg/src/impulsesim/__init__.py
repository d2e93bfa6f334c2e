"""Simulation of impulsive dynamical systems under small Brownian noise.

Integrates the deterministic flow, the noisy flow and the coupled
linearized fluctuation process of a periodically kicked system, and
estimates strong convergence rates by Monte Carlo.
"""

__version__ = "0.1.0"

from .dynamics import (
    ImpulseSchedule,
    Model,
    affine_kick_model,
    impulse_count,
    impulse_time,
    make_model,
    pendulum_model,
)
from .integrate import (
    BrownianPath,
    CadlagTrajectory,
    IntegrationOverflowError,
    SampleGrid,
    SimulationConfig,
    build_grid,
    integrate_deterministic,
    integrate_fluctuation,
    integrate_sde,
    path_seed,
    sample_brownian,
)
from .kickmap import KickField, affine_kick_map, kick_limit_check, regularized_kick
from .analysis import (
    ConvergenceReport,
    PathErrors,
    compute_path_errors,
    fit_loglog_slope,
    run_convergence_study,
    sup_error,
)

__all__ = [
    "BrownianPath",
    "CadlagTrajectory",
    "ConvergenceReport",
    "ImpulseSchedule",
    "IntegrationOverflowError",
    "KickField",
    "Model",
    "PathErrors",
    "SampleGrid",
    "SimulationConfig",
    "affine_kick_map",
    "affine_kick_model",
    "build_grid",
    "compute_path_errors",
    "fit_loglog_slope",
    "impulse_count",
    "impulse_time",
    "integrate_deterministic",
    "integrate_fluctuation",
    "integrate_sde",
    "kick_limit_check",
    "make_model",
    "path_seed",
    "pendulum_model",
    "regularized_kick",
    "run_convergence_study",
    "sample_brownian",
    "sup_error",
]
