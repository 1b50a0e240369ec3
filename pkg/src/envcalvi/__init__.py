"""Variational inference for response and predictor envelope regression.

The unconstrained basis block is handled by a Laplace factor inside
coordinate ascent, every other block by its exact conjugate update.
"""

from .errors import (
    AssumptionError,
    ConvergenceError,
    CurvatureError,
    EnvcalviError,
    NotPositiveDefiniteError,
    NumericalError,
    ValidationError,
)
from .modelselect import (
    DimensionPosterior,
    bic,
    bma_beta,
    dim_posterior,
    fit_dimension,
    mse_beta,
    residual_bootstrap,
    select_dimension,
)
from .predictor import PredictorEnvSpec, PredictorPriors
from .predictor_cavi import fit_pred
from .response import Dataset, ResponseEnvSpec, ResponsePriors
from .response_cavi import FitOptions, FitReport, fit
from .simgen import gen_predictor, gen_response

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "ConvergenceError",
    "CurvatureError",
    "Dataset",
    "DimensionPosterior",
    "EnvcalviError",
    "FitOptions",
    "FitReport",
    "NotPositiveDefiniteError",
    "NumericalError",
    "PredictorEnvSpec",
    "PredictorPriors",
    "ResponseEnvSpec",
    "ResponsePriors",
    "ValidationError",
    "bic",
    "bma_beta",
    "dim_posterior",
    "fit",
    "fit_dimension",
    "fit_pred",
    "gen_predictor",
    "gen_response",
    "mse_beta",
    "residual_bootstrap",
    "select_dimension",
]
