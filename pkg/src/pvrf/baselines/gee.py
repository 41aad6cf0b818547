"""Pseudo-value regression with a GEE working-independence model.

With working variance 1 and one observation per individual the
estimating equations are sum_i D_i' (theta_i - mu_i) = 0, D_i = d mu_i / d beta:
ordinary least squares for the identity link and a Gauss-Newton (Fisher
scoring) iteration for the log link.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceError, DataError, RankDeficientError, SchemaMismatchError

LINKS = ("identity", "log")


@dataclass(frozen=True)
class GeeModel:
    link: str
    coef: np.ndarray            # intercept first
    n_iter: int = 0
    converged: bool = True
    trace: list = field(default_factory=list)

    def linear_predictor(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.coef.size:
            raise SchemaMismatchError(f"design has {np.shape(X)[-1]} columns, model expects {self.coef.size}")
        return X @ self.coef


@dataclass(frozen=True)
class GeePrediction:
    values: np.ndarray
    exceeds_tau: np.ndarray     # prediction outside [0, tau] (not clipped)


def _check_design(y, X):
    X = np.asarray(X, dtype=float)
    y = np.asarray(getattr(y, "values", y), dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DataError("design matrix rows must match the number of pseudo-values")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DataError("non-finite values in GEE inputs")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficientError(f"design matrix has rank {rank} < {X.shape[1]} columns")
    return y, X


def fit_gee(pseudo, X, link="identity", max_iter=100, tol=1e-9) -> GeeModel:
    """Fit g(E[theta | x]) = x' beta to pseudo-values.

    ``X`` must already contain the intercept column.  The log link iterates
    until the largest coefficient step is below ``tol``; a step that raises
    the residual sum of squares is halved up to 10 times.
    """
    if link not in LINKS:
        raise DataError(f"unknown link {link!r}")
    y, X = _check_design(pseudo, X)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    if link == "identity":
        return GeeModel(link, beta)

    mean = y.mean()
    beta = np.zeros(X.shape[1])
    if mean > 0:
        # start at the intercept-only solution when the first column is constant
        const = np.flatnonzero(np.all(X == X[0], axis=0) & (X[0] != 0))
        if const.size:
            beta[const[0]] = np.log(mean) / X[0, const[0]]

    def rss(b):
        r = y - np.exp(X @ b)
        return float(r @ r)

    trace = []
    current = rss(beta)
    for it in range(1, max_iter + 1):
        mu = np.exp(X @ beta)
        D = X * mu[:, None]
        step, *_ = np.linalg.lstsq(D, y - mu, rcond=None)
        t = 1.0
        for _ in range(11):
            cand = beta + t * step
            new = rss(cand)
            if np.isfinite(new) and new <= current * (1 + 1e-12):
                break
            t *= 0.5
        else:
            raise ConvergenceError("log-link GEE: no step reduces the residual sum of squares", trace)
        beta, current = cand, new
        trace.append({"iter": it, "rss": current, "max_step": float(np.max(np.abs(t * step)))})
        if np.max(np.abs(t * step)) < tol:
            return GeeModel(link, beta, it, True, trace)
        if not np.all(np.isfinite(beta)):
            break
    raise ConvergenceError(f"log-link GEE did not converge in {max_iter} iterations", trace)


def predict_gee(model: GeeModel, X, tau=None) -> GeePrediction:
    """Inverse link of x' beta; values are not clipped to [0, tau]."""
    eta = model.linear_predictor(X)
    values = eta if model.link == "identity" else np.exp(eta)
    if tau is None:
        flags = np.zeros(values.size, dtype=bool)
    else:
        flags = (values < 0) | (values > tau)
    return GeePrediction(values, flags)
