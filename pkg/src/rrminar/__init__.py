"""Reduced-rank matrix integer-valued autoregression (RRMINAR).

Simulation with Poisson thinning, iterative conditional least squares
fitting with optional rank constraints, Cp rank selection, forecasting
metrics and a Monte Carlo harness.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .estimators import (
    EstimationResult,
    FitConfig,
    fit_colwise_mginar,
    fit_inar_cls,
    fit_mginar_lse,
    fit_minar_iclse,
    fit_rowwise_mginar,
    fit_rrminar_iclse,
    objective_value,
    projection_init,
)
from .eval_forecast import MetricsReport, evaluate, kron_error, mginar_error, normalized_error_curve, one_step_forecast
from .model import CountMatrixSeries, MinarCoefficients
from .rank_select import CpReport, cp_score, select_rank
from .thinning_sim import (
    SimulationSetting,
    gen_coefficients,
    gen_innovation_rates,
    make_rng,
    matrix_thin,
    poisson_thin,
    simulate_minar,
)

__all__ = [
    "CountMatrixSeries",
    "CpReport",
    "EstimationResult",
    "FitConfig",
    "MetricsReport",
    "MinarCoefficients",
    "SimulationSetting",
    "cp_score",
    "evaluate",
    "fit_colwise_mginar",
    "fit_inar_cls",
    "fit_mginar_lse",
    "fit_minar_iclse",
    "fit_rowwise_mginar",
    "fit_rrminar_iclse",
    "gen_coefficients",
    "gen_innovation_rates",
    "kron_error",
    "make_rng",
    "matrix_thin",
    "mginar_error",
    "normalized_error_curve",
    "objective_value",
    "one_step_forecast",
    "poisson_thin",
    "projection_init",
    "select_rank",
    "simulate_minar",
]
