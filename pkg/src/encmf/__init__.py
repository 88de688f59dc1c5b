"""Ensemble conditional-mean filtering with neural-network CM approximation.

Modules: ``stats`` (moments, gains, affine CM), ``models`` (Lorenz systems,
RK4), ``observation`` (maps, noise), ``filters`` (analysis transforms and the
importance-sampling oracle), ``ann`` (network, training, model selection),
``metrics``, ``harness`` (twin experiments) and ``demo1d``.
"""
from .config import Demo1DConfig, ExperimentConfig, load_preset
from .errors import ConfigError, DomainError, NumericalError
from .filters import (ConditionalMeanModel, cmf_analysis, enkf_analysis, genkf_analysis,
                      mlencmf_analysis, posterior_mean_sir, posterior_second_moment_sir)
from .harness import run_experiment, sweep
from .stats import (AffineEstimator, cross_cov, ensemble_cov, ensemble_mean, fit_affine,
                    kalman_gain_generalized, kalman_gain_linear, solve_spd)

__version__ = "0.1.0"
