"""Bayesian MMSE estimation and input design for Wiener models with Fourier features."""
from .active import ErrorObjective, OptimizeOptions, OptimizeResult, error_gradient, optimize_inputs
from .dbs import DesignStatistics, FourierBasis, GAUSSIAN, NoiseCharacteristic, build_design
from .estimators import (EstimatorGain, NotPositiveDefiniteError, PosteriorBelief, bayes_estimate, bayes_gain,
                         error_information_form, error_path, posterior_update, rls_fit, rls_matrix)
from .lifted import (DimensionError, InputTrajectory, LinearDynamics, NoiseModel, StateStatistics,
                     propagate_state_stats)
from .model import WienerModel, robot_input, robot_model, sinusoid_controls
from .multitraj import (Batch, MultiTrajectoryPlan, assemble_multi, inconsistency_probe, information_matrix,
                        multi_gain)
from .prior import ParameterPrior
from .sim import (GaussianPrior, LinearMethod, ReplicateResult, SimSeed, UniformPrior, monte_carlo_benchmark,
                  sample_prior_theta, simulate_trajectory)

__all__ = [
    "Batch", "DesignStatistics", "DimensionError", "ErrorObjective", "EstimatorGain", "FourierBasis", "GAUSSIAN",
    "GaussianPrior", "InputTrajectory", "LinearDynamics", "LinearMethod", "MultiTrajectoryPlan",
    "NoiseCharacteristic", "NoiseModel", "NotPositiveDefiniteError", "OptimizeOptions", "OptimizeResult",
    "ParameterPrior", "PosteriorBelief", "ReplicateResult", "SimSeed", "StateStatistics", "UniformPrior",
    "WienerModel", "assemble_multi", "bayes_estimate", "bayes_gain", "build_design", "error_gradient",
    "error_information_form", "error_path", "inconsistency_probe", "information_matrix", "monte_carlo_benchmark",
    "multi_gain", "optimize_inputs", "robot_input", "robot_model", "posterior_update", "propagate_state_stats",
    "rls_fit", "rls_matrix", "sample_prior_theta", "simulate_trajectory", "sinusoid_controls",
]
