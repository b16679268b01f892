"""Bayesian learning to stabilize unknown continuous-time stochastic linear systems."""

from .bayes_learn import (
    ParameterSample,
    Posterior,
    build_posterior,
    estimation_error,
    sample_parameters,
)
from .errors import (
    BayestabError,
    CareNoSolution,
    ConfigError,
    IndefiniteSolution,
    InputError,
    NumericalFailure,
)
from .linalg_control import (
    CareSolution,
    lqr_gain,
    matrix_exponential,
    operator_norm,
    riccati_operator,
    solve_care,
    solve_lyapunov,
    spectral_abscissa,
)
from .sde_sim import DynamicsModel, PolicySchedule, Trajectory, make_dither, simulate
from .stabilizer import (
    FailureReason,
    StabilizationConfig,
    StabilizationOutcome,
    is_stabilizing,
    run_algorithm1,
    theorem2_check,
)

__version__ = "0.1.0"
