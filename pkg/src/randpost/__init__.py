"""Bayesian inverse problems with randomized forward maps.

Closed-form linear-Gaussian posteriors, Monte Carlo likelihood estimators,
four Metropolis-type samplers and convergence experiments.
"""
from .analytic import (
    LinearGaussianProblem,
    RandomizedLinearGaussianProblem,
    averaged_posterior,
    exact_posterior,
    marginal_posterior,
    mixture_density,
    mixture_moments,
    sample_posterior,
)
from .diagnostics import (
    RateFit,
    TensorGrid,
    empirical_moments,
    fit_rate,
    hellinger_quadrature,
    integrated_autocorrelation,
    moment_error,
    moment_standard_errors,
)
from .forward import LinearForwardMap, RandomizedLinearForwardMap, estimate_ms_order
from .gaussian import GaussianMeasure, hellinger_gaussian
from .potential import Observation, mc_likelihood, normalizing_constant, weighted_mc_likelihood
from .rng import SeededRng
from .samplers import Chain, ChainConfig, MwmcSample, acceptance_ratio, mcwm, mwmc, pmmh, rwmh

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ChainConfig",
    "GaussianMeasure",
    "LinearForwardMap",
    "LinearGaussianProblem",
    "MwmcSample",
    "Observation",
    "RandomizedLinearForwardMap",
    "RandomizedLinearGaussianProblem",
    "RateFit",
    "SeededRng",
    "TensorGrid",
    "acceptance_ratio",
    "averaged_posterior",
    "empirical_moments",
    "estimate_ms_order",
    "exact_posterior",
    "fit_rate",
    "hellinger_gaussian",
    "hellinger_quadrature",
    "integrated_autocorrelation",
    "marginal_posterior",
    "mc_likelihood",
    "mcwm",
    "mixture_density",
    "mixture_moments",
    "moment_error",
    "moment_standard_errors",
    "mwmc",
    "normalizing_constant",
    "pmmh",
    "rwmh",
    "sample_posterior",
    "weighted_mc_likelihood",
]
