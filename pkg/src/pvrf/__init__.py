"""Pseudo-value random forests for the restricted mean survival time."""

from .data import CovariateColumn, EpisodeDataset, SurvivalDataset, from_arrays, load_csv, split_episodes
from .effects import Contrast, average_contrast, individual_contrasts
from .forest import ForestModel, ForestParams, fit_forest, predict_rmst, tune_mtry
from .km import StepSurvivalCurve, censoring_curve, km_curve, rmst_from_curve
from .models import FittedModel, fit_model
from .pseudo import PseudoValueVector, pseudo_values, pseudo_values_fast

__version__ = "0.1.0"

__all__ = [
    "Contrast", "CovariateColumn", "EpisodeDataset", "FittedModel", "ForestModel", "ForestParams",
    "PseudoValueVector", "StepSurvivalCurve", "SurvivalDataset", "average_contrast", "censoring_curve",
    "fit_forest", "fit_model", "from_arrays", "individual_contrasts", "km_curve", "load_csv",
    "predict_rmst", "pseudo_values", "pseudo_values_fast", "rmst_from_curve", "split_episodes", "tune_mtry",
]
