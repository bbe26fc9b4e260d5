"""Probabilistic estimation and prediction for compartmental models of survey series."""
from ._backend import BACKEND
from .dynamics import CompartmentState, GammaParams, Trajectory, integrate
from .errors import (
    DegenerateExpectedError,
    DivergenceError,
    InsufficientEnsembleError,
    InvalidArgumentError,
    ParseError,
    SurveyBandError,
    UnfittableError,
)
from .io import ResultBundle, bundled_surveys, load_results, load_surveys, write_results
from .optimize import SimplexConfig, maximize
from .pipeline import (
    FitConfig,
    data_quantiles,
    estimation_band,
    predict,
    run_ensemble,
    select_band,
)
from .stats import SurveyRecord, chi_square_pvalue, chi_square_statistic

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CompartmentState",
    "DegenerateExpectedError",
    "DivergenceError",
    "FitConfig",
    "GammaParams",
    "InsufficientEnsembleError",
    "InvalidArgumentError",
    "ParseError",
    "ResultBundle",
    "SimplexConfig",
    "SurveyBandError",
    "SurveyRecord",
    "Trajectory",
    "UnfittableError",
    "bundled_surveys",
    "chi_square_pvalue",
    "chi_square_statistic",
    "data_quantiles",
    "estimation_band",
    "integrate",
    "load_results",
    "load_surveys",
    "maximize",
    "predict",
    "run_ensemble",
    "select_band",
    "write_results",
]
