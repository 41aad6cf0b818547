"""Comparison estimators: GEE pseudo-value regression, Cox PH, lognormal AFT."""

from .cox import CoxModel, cox_rmst, cox_survival, fit_cox
from .gee import GeeModel, GeePrediction, fit_gee, predict_gee
from .lognormal import LognormalAft, fit_lognormal, lognormal_rmst, lognormal_survival

__all__ = [
    "CoxModel", "cox_rmst", "cox_survival", "fit_cox",
    "GeeModel", "GeePrediction", "fit_gee", "predict_gee",
    "LognormalAft", "fit_lognormal", "lognormal_rmst", "lognormal_survival",
]
