"""Uniform fit/predict interface over the forests and the baseline estimators.

Every fitted model predicts RMST at its training horizon ``tau`` from a
matrix of covariate codes laid out by the training schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (CoxModel, GeeModel, LognormalAft, cox_rmst, fit_cox, fit_gee, fit_lognormal,
                        lognormal_rmst, predict_gee)
from .data import ColumnSchema, check_X, design_matrix, split_episodes
from .errors import DataError
from .forest import ForestModel, ForestParams, fit_forest, tune_mtry
from .km import km_rmst
from .pseudo import pseudo_values_fast

METHODS = ("cart", "conditional", "gee", "gee-log", "cox", "lognormal", "reference", "km")
FORMAT = "pvrf-model"
FORMAT_VERSION = 1


def term_matrix(schema, X, terms) -> np.ndarray:
    """Columns for terms like ``"x1"`` or ``"x1*x3"`` (products of numeric codes)."""
    X = check_X(schema, X)
    names = [c.name for c in schema]
    cols = []
    for term in terms:
        col = np.ones(X.shape[0])
        for part in term.split("*"):
            part = part.strip()
            if part not in names:
                raise DataError(f"unknown column {part!r} in term {term!r}")
            col = col * X[:, names.index(part)]
        cols.append(col)
    return np.column_stack(cols) if cols else np.empty((X.shape[0], 0))


@dataclass
class FittedModel:
    method: str
    tau: float
    schema: tuple
    model: object
    info: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = check_X(self.schema, X)
        m, tau = self.method, self.tau
        if m in ("cart", "conditional"):
            return self.model.predict(X)
        if m in ("gee", "gee-log"):
            return predict_gee(self.model, design_matrix(self.schema, X, intercept=True), tau).values
        if m == "cox":
            return cox_rmst(self.model, design_matrix(self.schema, X), tau)
        if m == "lognormal":
            return lognormal_rmst(self.model, design_matrix(self.schema, X, intercept=True), tau)
        if m == "reference":
            return cox_rmst(self.model, self._reference_design(X), tau, self._reference_strata(X))
        if m == "km":
            return np.full(X.shape[0], self.model)
        raise DataError(f"unknown method {m!r}")

    # reference model helpers -------------------------------------------
    def _reference_design(self, X):
        terms = list(self.info["terms"])
        if self.info.get("t0") is None and self.info.get("treatment"):
            terms.append(self.info["treatment"])
        return term_matrix(self.schema, X, terms)

    def _reference_strata(self, X):
        if self.info.get("t0") is None:
            return None
        j = [c.name for c in self.schema].index(self.info["treatment"])
        levels = self.schema[j].levels
        return [(f"{levels[int(c)]}|pre", f"{levels[int(c)]}|post") for c in X[:, j]]

    # persistence ---------------------------------------------------------
    def to_json(self):
        m = self.model
        if isinstance(m, ForestModel):
            payload = m.to_json()
        elif isinstance(m, GeeModel):
            payload = {"link": m.link, "coef": m.coef.tolist()}
        elif isinstance(m, CoxModel):
            payload = {"coef": m.coef.tolist(), "se": m.se.tolist(), "loglik": m.loglik,
                       "baseline": {k: [t.tolist(), h.tolist()] for k, (t, h) in m.baseline.items()}}
        elif isinstance(m, LognormalAft):
            payload = {"coef": m.coef.tolist(), "sigma": m.sigma, "loglik": m.loglik}
        else:
            payload = {"value": float(m)}
        return {"format": FORMAT, "version": FORMAT_VERSION, "method": self.method, "tau": self.tau,
                "schema": [c.to_json() for c in self.schema], "info": self.info, "model": payload}

    @classmethod
    def from_json(cls, d):
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise DataError("not a version-1 pvrf model file")
        method, p = d["method"], d["model"]
        if method in ("cart", "conditional"):
            model = ForestModel.from_json(p)
        elif method in ("gee", "gee-log"):
            model = GeeModel(p["link"], np.asarray(p["coef"], dtype=float))
        elif method in ("cox", "reference"):
            model = CoxModel(np.asarray(p["coef"], dtype=float), np.asarray(p["se"], dtype=float), p["loglik"], 0,
                             {k: (np.asarray(t, dtype=float), np.asarray(h, dtype=float))
                              for k, (t, h) in p["baseline"].items()})
        elif method == "lognormal":
            model = LognormalAft(np.asarray(p["coef"], dtype=float), float(p["sigma"]), p["loglik"], 0)
        elif method == "km":
            model = float(p["value"])
        else:
            raise DataError(f"unknown method {method!r}")
        schema = tuple(ColumnSchema.from_json(c) for c in d["schema"])
        return cls(method, float(d["tau"]), schema, model, dict(d.get("info", {})))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def fit_model(method, dataset, tau, *, params: ForestParams | None = None, tune=False, grid=None,
              n_jobs=1, terms=None, t0=None, treatment=None) -> FittedModel:
    """Fit ``method`` for horizon ``tau``.

    Forest options: ``params`` (seed, n_trees, ...), ``tune`` to choose mtry
    by 5-fold CV over ``grid``.  Reference Cox options: ``terms`` (names or
    products such as ``"x1*x3"``), and either ``t0`` to stratify the
    treatment column before/after t0 or no ``t0`` to enter treatment as a
    covariate.
    """
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau}")
    schema = dataset.schema
    info = {}
    if method in ("cart", "conditional"):
        params = params or ForestParams()
        pv = pseudo_values_fast(dataset, tau)
        if tune:
            params = replace(params, mtry=tune_mtry(dataset, pv, params, grid, 5, method, n_jobs))
        model = fit_forest(dataset, pv, params, method, n_jobs)
    elif method in ("gee", "gee-log"):
        pv = pseudo_values_fast(dataset, tau)
        link = "identity" if method == "gee" else "log"
        model = fit_gee(pv, design_matrix(schema, dataset.X, intercept=True), link)
    elif method == "cox":
        model = fit_cox(dataset)
    elif method == "lognormal":
        model = fit_lognormal(dataset)
    elif method == "km":
        model = km_rmst(dataset.time, dataset.status, tau)
    else:
        treatment = treatment or dataset.treatment
        if terms is None:
            raise DataError("the reference model needs its informative terms")
        info = {"terms": list(terms), "t0": None if t0 is None else float(t0), "treatment": treatment}
        if t0 is None:
            X = term_matrix(schema, dataset.X, list(terms) + ([treatment] if treatment else []))
            model = fit_cox(dataset, X)
        else:
            if treatment is None:
                raise DataError("stratifying at t0 needs a treatment column")
            ep = split_episodes(dataset, t0, treatment)
            model = fit_cox(ep, term_matrix(schema, ep.X, terms))
    return FittedModel(method, float(tau), schema, model, info)
