"""Best-arm identification in piecewise-stationary linear bandits."""

from ._accel import backend
from .algos import (ALGORITHMS, AlgoResult, ConfigError, PSParams, run_debai, run_debai_beta, run_nebai,
                    run_psebai, run_psebai_plus)
from .bounds import hardness_terms, nc_lower_bound, tau_star, threshold_b
from .design import Allocation, compute_g_optimal
from .env import EnvState, Instance, NoiseModel, eps_best_set, expected_returns, make_example_5_1, \
    make_example_I_2
from .harness import ExperimentConfig, emit_plot_data, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AlgoResult", "Allocation", "ConfigError", "EnvState", "ExperimentConfig", "Instance",
    "NoiseModel", "PSParams", "backend", "compute_g_optimal", "emit_plot_data", "eps_best_set",
    "expected_returns", "hardness_terms", "make_example_5_1", "make_example_I_2", "nc_lower_bound",
    "run_debai", "run_debai_beta", "run_experiment", "run_nebai", "run_psebai", "run_psebai_plus",
    "tau_star", "threshold_b",
]
