"""Expected information gain estimation for Bayesian experimental designs.

Nested Monte Carlo and an antithetic multilevel estimator with optional
Laplace-based importance sampling, plus two ready-made data models (a
linear-Gaussian case with a closed-form answer and a one-compartment
pharmacokinetic model).
"""

from .adaptive import (
    AdaptiveConfig,
    MlmcRunResult,
    bias_converged,
    estimate_rates,
    nmc_cost_model,
    optimal_allocation,
    run_adaptive,
)
from .bayes import BayesModel, ForwardMap, fd_hessian, fd_jacobian, log_likelihood, sample_data
from .errors import (
    EvaluationError,
    InnerUnderflowError,
    InsufficientDataError,
    NonConvergenceError,
)
from .estimators import (
    EstimatorConfig,
    LevelSample,
    LevelStats,
    accumulate,
    merge,
    nmc_estimate,
    sample_correction,
    sample_level_values,
    sample_level_zero,
    sample_p_values,
    sample_plain_difference,
)
from .gaussian import GaussianDensity
from .laplace import GaussianIS, laplace_fit, log_is_weight
from .models import (
    LinearGaussianSpec,
    PkSpec,
    linear_gaussian_analytic_eig,
    make_linear_model,
    make_pk_model,
    pk_forward,
    sampling_schedule,
)
from .streams import RandomStream

__version__ = "0.1.0"

__all__ = [
    "AdaptiveConfig",
    "BayesModel",
    "EstimatorConfig",
    "EvaluationError",
    "ForwardMap",
    "GaussianDensity",
    "GaussianIS",
    "InnerUnderflowError",
    "InsufficientDataError",
    "LevelSample",
    "LevelStats",
    "LinearGaussianSpec",
    "MlmcRunResult",
    "NonConvergenceError",
    "PkSpec",
    "RandomStream",
    "accumulate",
    "bias_converged",
    "estimate_rates",
    "fd_hessian",
    "fd_jacobian",
    "laplace_fit",
    "linear_gaussian_analytic_eig",
    "log_is_weight",
    "log_likelihood",
    "make_linear_model",
    "make_pk_model",
    "merge",
    "nmc_cost_model",
    "nmc_estimate",
    "optimal_allocation",
    "pk_forward",
    "run_adaptive",
    "sample_correction",
    "sample_data",
    "sample_level_values",
    "sample_level_zero",
    "sample_p_values",
    "sample_plain_difference",
    "sampling_schedule",
]
