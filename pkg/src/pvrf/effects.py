"""Treatment contrasts by g-computation (standardisation over the sample)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, MissingColumnError


@dataclass(frozen=True)
class Contrast:
    """Per-row mu(tau | x, trt = A) - mu(tau | x, trt = B)."""

    tau: float
    individual: np.ndarray
    level_a: str
    level_b: str

    @property
    def average(self) -> float:
        return average_contrast(self)

    def __len__(self):
        return self.individual.size


def _predict(predictor, X):
    if hasattr(predictor, "predict"):
        return np.asarray(predictor.predict(X), dtype=float)
    if callable(predictor):
        return np.asarray(predictor(X), dtype=float)
    raise TypeError("predictor needs a predict(X) method")


def counterfactual(dataset, level, treatment=None) -> np.ndarray:
    """Covariate codes of every row with the treatment forced to ``level``."""
    name = treatment or dataset.treatment
    if name is None:
        raise MissingColumnError("dataset declares no treatment column")
    j = dataset.names.index(name) if name in dataset.names else None
    if j is None:
        raise MissingColumnError(f"no column named {name!r}")
    code = dataset.schema[j].code(level)
    X = np.array(dataset.X, dtype=float)
    X[:, j] = code
    return X


def individual_contrasts(predictor, dataset, level_a, level_b, tau=None, treatment=None) -> Contrast:
    """Predict every row twice, once under each treatment level, and difference.

    No refitting happens; the standardisation population is the whole of
    ``dataset``.
    """
    Xa = counterfactual(dataset, level_a, treatment)
    Xb = counterfactual(dataset, level_b, treatment)
    if tau is None:
        tau = getattr(predictor, "tau", float("nan"))
    delta = _predict(predictor, Xa) - _predict(predictor, Xb)
    return Contrast(float(tau), delta, str(level_a), str(level_b))


def average_contrast(contrast) -> float:
    values = np.asarray(getattr(contrast, "individual", contrast), dtype=float)
    if values.size == 0:
        raise DataError("no individual contrasts to average")
    return float(values.mean())
