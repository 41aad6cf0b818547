"""Prediction error metrics, IPC-weighted cross-validation, and model interpretation.

WRSS_k = mean over test fold k of w_i * (min(T_i, tau) - mu_hat(tau | x_i))**2
with inverse-probability-of-censoring weights

    w_i = 1{T_i <= tau} delta_i / G(T_i-) + 1{T_i > tau} / G(tau),

G the Kaplan-Meier curve of the censoring times in the training folds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .effects import individual_contrasts
from .errors import DataError, NumericError
from .forest import cv_folds
from .km import StepSurvivalCurve, censoring_curve, curve_eval, curve_eval_left
from .models import fit_model


def _pair(a, b):
    a = np.asarray(getattr(a, "individual", a), dtype=float)
    b = np.asarray(getattr(b, "individual", b), dtype=float)
    if a.shape != b.shape:
        raise DataError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise DataError("empty input")
    return a, b


def mse_rmst(predicted, truth) -> float:
    a, b = _pair(predicted, truth)
    return float(np.mean((a - b) ** 2))


def mse_delta(predicted, truth) -> float:
    """MSE of individual treatment contrasts (same arithmetic as :func:`mse_rmst`)."""
    return mse_rmst(predicted, truth)


def rmse(predicted, truth) -> float:
    return float(np.sqrt(mse_rmst(predicted, truth)))


@dataclass(frozen=True)
class IpcWeights:
    weights: np.ndarray
    tau: float
    curve: StepSurvivalCurve


def ipc_weights(dataset, tau, G: StepSurvivalCurve | None = None) -> IpcWeights:
    """Weights from the censoring curve ``G`` (default: fitted to ``dataset``).

    Rows censored at or before tau get weight exactly 0.
    """
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau}")
    if G is None:
        G = censoring_curve(dataset)
    t = np.asarray(dataset.time, dtype=float)
    d = np.asarray(dataset.status)
    w = np.zeros(t.size)
    early = (t <= tau) & (d == 1)
    late = t > tau
    g_early = np.atleast_1d(curve_eval_left(G, t[early]))
    g_tau = float(curve_eval(G, tau))
    bad = np.flatnonzero(early)[g_early <= 0]
    if bad.size:
        raise NumericError(f"censoring survival is zero before the event of row {bad[0]}")
    if late.any() and g_tau <= 0:
        raise NumericError(f"censoring survival is zero at tau for row {np.flatnonzero(late)[0]}")
    w[early] = 1.0 / g_early
    if late.any():
        w[late] = 1.0 / g_tau
    return IpcWeights(w, float(tau), G)


def _predictions(predictor, dataset):
    if hasattr(predictor, "predict"):
        return np.asarray(predictor.predict(dataset.X), dtype=float)
    if callable(predictor):
        return np.asarray(predictor(dataset.X), dtype=float)
    return np.asarray(predictor, dtype=float)


def wrss(dataset, predictor, tau, G: StepSurvivalCurve | None = None, weights=None) -> float:
    """IPC-weighted mean squared residual of min(T, tau).

    ``predictor`` is a fitted model, a callable on covariate codes, or the
    predictions themselves.
    """
    if weights is None:
        weights = ipc_weights(dataset, tau, G).weights
    pred = _predictions(predictor, dataset)
    y = np.minimum(np.asarray(dataset.time, dtype=float), tau)
    if pred.shape != y.shape:
        raise DataError("one prediction per row is required")
    return float(np.mean(weights * (y - pred) ** 2))


@dataclass(frozen=True)
class MetricReport:
    metric: str
    values: tuple

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    def rows(self, entity=""):
        """Long-format rows (entity, metric, fold, value); fold 'mean'/'min'/'max' summarise."""
        out = [(entity, self.metric, str(k + 1), float(v)) for k, v in enumerate(self.values)]
        out += [(entity, self.metric, "mean", self.mean), (entity, self.metric, "min", self.min),
                (entity, self.metric, "max", self.max)]
        return out


@dataclass(frozen=True)
class CvResult:
    wrss: MetricReport
    contrast: MetricReport | None
    pfi: dict | None                # covariate -> MetricReport
    folds: np.ndarray


def fold_assignment(dataset, k, seed) -> np.ndarray:
    """Status-stratified folds; every fold must contain an event."""
    if k < 2:
        raise DataError("need at least two folds")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xC5,)))
    folds = cv_folds(dataset.n, k, rng, strata=np.asarray(dataset.status))
    for f in range(k):
        if not np.any(np.asarray(dataset.status)[folds == f] == 1):
            raise DataError(f"fold {f + 1} has no events")
    return folds


def cross_validate(dataset, method, tau, k=5, seed=0, *, level_a=None, level_b=None, importance=False,
                   fit_options=None) -> CvResult:
    """k-fold CV: fit on the training folds, evaluate on the held-out fold.

    The censoring curve G is estimated from the training folds only.  With
    ``level_a``/``level_b`` also reports the held-out average contrast; with
    ``importance`` the permutation importance of every covariate.
    """
    fit_options = dict(fit_options or {})
    folds = fold_assignment(dataset, k, seed)
    perm_rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x9F1,)))
    w_vals, c_vals = [], []
    pfi_vals = {name: [] for name in dataset.names}
    for f in range(k):
        train = dataset.subset(np.flatnonzero(folds != f))
        test = dataset.subset(np.flatnonzero(folds == f))
        model = fit_model(method, train, tau, **fit_options)
        G = censoring_curve(train)
        w_vals.append(wrss(test, model, tau, G))
        if level_a is not None:
            c_vals.append(individual_contrasts(model, test, level_a, level_b, tau).average)
        if importance:
            for name, v in pfi(model, test, tau, G, perm_rng).items():
                pfi_vals[name].append(v)
    return CvResult(
        MetricReport("wrss", tuple(w_vals)),
        MetricReport("contrast", tuple(c_vals)) if c_vals else None,
        {n: MetricReport("pfi", tuple(v)) for n, v in pfi_vals.items()} if importance else None,
        folds,
    )


def cv_wrss(dataset, method, tau, k=5, seed=0, fit_options=None) -> MetricReport:
    return cross_validate(dataset, method, tau, k, seed, fit_options=fit_options).wrss


def cv_contrast(dataset, method, tau, level_a, level_b, k=5, seed=0, fit_options=None) -> MetricReport:
    return cross_validate(dataset, method, tau, k, seed, level_a=level_a, level_b=level_b,
                          fit_options=fit_options).contrast


def pfi(model, dataset, tau, G, rng, columns=None) -> dict:
    """WRSS with one covariate permuted over WRSS intact, per covariate.

    A covariate the model never uses leaves every prediction unchanged, so
    its importance is exactly 1.
    """
    weights = ipc_weights(dataset, tau, G).weights
    base = wrss(dataset, model, tau, weights=weights)
    if base <= 0:
        raise NumericError("intact WRSS is zero; permutation importance undefined")
    out = {}
    names = dataset.names
    for name in (columns or names):
        j = names.index(name)
        X = np.array(dataset.X, dtype=float)
        X[:, j] = X[rng.permutation(dataset.n), j]
        pred = _predictions(model, dataset.with_X(X))
        out[name] = wrss(dataset, pred, tau, weights=weights) / base
    return out


@dataclass(frozen=True)
class ShapleyResult:
    values: np.ndarray          # per covariate
    se: np.ndarray              # Monte-Carlo standard errors
    base: float                 # mean prediction over the background
    prediction: float
    total_se: float             # standard error of values.sum()


def shapley_mc(model, x, background, m=200, rng=None) -> ShapleyResult:
    """Permutation-sampling estimate of Shapley values for one row.

    Each of the ``m`` draws takes a random feature order and a random
    background row z, then switches features from z to x one at a time in
    that order; the prediction change at each switch is that feature's
    contribution.  Contributions of one draw sum to f(x) - f(z).
    """
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.shape[0] == 0:
        raise DataError("background sample is empty")
    if m < 1:
        raise DataError("need at least one permutation")
    rng = np.random.default_rng() if rng is None else rng
    x = np.asarray(x, dtype=float).ravel()
    p = x.size
    predict = model.predict if hasattr(model, "predict") else model
    rows = np.empty((m, p + 1, p))
    orders = np.empty((m, p), dtype=np.int64)
    for s in range(m):
        order = rng.permutation(p)
        z = background[rng.integers(background.shape[0])]
        cur = z.copy()
        rows[s, 0] = cur
        for k, j in enumerate(order):
            cur[j] = x[j]
            rows[s, k + 1] = cur
        orders[s] = order
    f = np.asarray(predict(rows.reshape(-1, p)), dtype=float).reshape(m, p + 1)
    steps = np.diff(f, axis=1)
    contrib = np.empty((m, p))
    np.put_along_axis(contrib, orders, steps, axis=1)
    values = contrib.mean(axis=0)
    ddof = 1 if m > 1 else 0
    se = contrib.std(axis=0, ddof=ddof) / np.sqrt(m)
    total_se = float(contrib.sum(axis=1).std(ddof=ddof) / np.sqrt(m))
    base = float(np.mean(predict(background)))
    return ShapleyResult(values, se, base, float(f[0, -1]), total_se)
