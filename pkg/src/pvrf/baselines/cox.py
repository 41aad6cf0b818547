"""Cox proportional hazards model: Breslow partial likelihood, strata, (start, stop] rows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import EpisodeDataset, design_matrix
from ..errors import ConvergenceError, DataError, RankDeficientError, SchemaMismatchError, SeparationError
from ..km import step_integral

DEFAULT_STRATUM = "all"


@dataclass(frozen=True)
class CoxModel:
    coef: np.ndarray
    se: np.ndarray
    loglik: float
    n_iter: int
    baseline: dict                  # stratum -> (event times, Breslow cumulative hazard)
    trace: list = field(default_factory=list)

    @property
    def strata(self) -> tuple:
        return tuple(self.baseline)

    def cumulative_hazard(self, t, strata=None):
        """Baseline H0(t), summed over ``strata`` (a label or a tuple of labels)."""
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape)
        for s in _chain(self, strata):
            times, H = self.baseline[s]
            idx = np.searchsorted(times, t, side="right")
            total = total + np.concatenate(([0.0], H))[idx]
        return total


def _chain(model, strata):
    if strata is None:
        if len(model.baseline) != 1:
            raise DataError("model is stratified; name the stratum (or strata chain) to use")
        return tuple(model.baseline)
    chain = (strata,) if isinstance(strata, str) else tuple(strata)
    for s in chain:
        if s not in model.baseline:
            raise DataError(f"unknown stratum {s!r}")
    return chain


def _counting_process(data, strata):
    if isinstance(data, EpisodeDataset):
        start, stop, status = data.start, data.stop, data.status
        labels = np.asarray(data.stratum if strata is None else strata, dtype=object)
    else:
        stop, status = np.asarray(data.time, dtype=float), np.asarray(data.status)
        start = np.zeros_like(stop)
        labels = np.full(stop.size, DEFAULT_STRATUM, dtype=object) if strata is None else np.asarray(strata, dtype=object)
    if labels.shape != stop.shape:
        raise DataError("one stratum label per row is required")
    return np.asarray(start, float), np.asarray(stop, float), np.asarray(status, float), labels


class _Stratum:
    """Event-time risk-set sums for one stratum, reusable across Newton steps."""

    def __init__(self, start, stop, status, X):
        self.X = X
        self.event_times, inv = np.unique(stop[status == 1], return_inverse=True)
        ev = np.flatnonzero(status == 1)
        self.d = np.bincount(inv, minlength=self.event_times.size).astype(float)
        self.x_events = X[ev].sum(axis=0)
        self.by_stop = np.argsort(stop, kind="stable")
        self.by_start = np.argsort(start, kind="stable")
        # rows with stop >= t minus rows with start >= t is the risk set start < t <= stop
        self.i_stop = np.searchsorted(stop[self.by_stop], self.event_times, side="left")
        self.i_start = np.searchsorted(start[self.by_start], self.event_times, side="left")

    @staticmethod
    def _suffix(a, order, at):
        cs = np.cumsum(a[order][::-1], axis=0)[::-1]
        cs = np.concatenate((cs, np.zeros((1,) + cs.shape[1:])), axis=0)
        return cs[at]

    def sums(self, w, second=True):
        X = self.X
        s0 = self._suffix(w, self.by_stop, self.i_stop) - self._suffix(w, self.by_start, self.i_start)
        wx = w[:, None] * X
        s1 = self._suffix(wx, self.by_stop, self.i_stop) - self._suffix(wx, self.by_start, self.i_start)
        s2 = None
        if second:
            wxx = wx[:, :, None] * X[:, None, :]
            s2 = self._suffix(wxx, self.by_stop, self.i_stop) - self._suffix(wxx, self.by_start, self.i_start)
        return s0, s1, s2


def _evaluate(parts, beta, second=True):
    loglik, p = 0.0, beta.size
    score = np.zeros(p)
    info = np.zeros((p, p))
    for st in parts:
        eta = st.X @ beta
        c = eta.max()
        s0, s1, s2 = st.sums(np.exp(eta - c), second)
        loglik += float(st.x_events @ beta - st.d @ (np.log(s0) + c))
        xbar = s1 / s0[:, None]
        score += st.x_events - st.d @ xbar
        if second:
            info += np.einsum("k,kij->ij", st.d, s2 / s0[:, None, None]) - np.einsum("k,ki,kj->ij", st.d, xbar, xbar)
    return loglik, score, info


def fit_cox(data, X=None, strata=None, max_iter=50, tol=1e-9) -> CoxModel:
    """Newton-Raphson maximisation of the Breslow partial likelihood.

    ``data`` is a SurvivalDataset (rows at risk on (0, T]) or an
    EpisodeDataset (rows at risk on (start, stop], stratum labels taken
    from the episodes).  ``X`` is the numeric design without intercept,
    defaulting to the dataset's covariate design.  A step that lowers the
    log partial likelihood is halved up to 10 times.  Converged when the
    score norm is below ``tol``.
    """
    start, stop, status, labels = _counting_process(data, strata)
    if X is None:
        X = design_matrix(data.schema, data.X)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != stop.size:
        raise SchemaMismatchError("design rows must match the data rows")
    p = X.shape[1]
    centre = X.mean(axis=0) if p else np.zeros(0)
    Xc = X - centre           # the partial likelihood is shift invariant

    parts, names = [], sorted(set(labels.tolist()))
    for s in names:
        rows = labels == s
        if not np.any(status[rows] == 1):
            raise DataError(f"stratum {s!r} has no events")
        parts.append(_Stratum(start[rows], stop[rows], status[rows], Xc[rows]))

    beta = np.zeros(p)
    loglik, score, info = _evaluate(parts, beta)
    trace = [{"iter": 0, "loglik": loglik, "score_norm": float(np.linalg.norm(score))}]
    it = 0
    while p and np.linalg.norm(score) >= tol:
        if it == max_iter:
            if np.max(np.abs(beta)) > 20:
                raise SeparationError("coefficients diverge: monotone partial likelihood", trace)
            raise ConvergenceError(f"Cox fit did not converge in {max_iter} iterations", trace)
        it += 1
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise RankDeficientError("singular information matrix (collinear or constant covariates)") from None
        t = 1.0
        for _ in range(11):
            cand = beta + t * step
            new = _evaluate(parts, cand)
            if np.isfinite(new[0]) and new[0] >= loglik - 1e-12 * abs(loglik):
                break
            t *= 0.5
        else:
            raise ConvergenceError("Cox fit: no step increases the partial likelihood", trace)
        beta, (loglik, score, info) = cand, new
        trace.append({"iter": it, "loglik": loglik, "score_norm": float(np.linalg.norm(score))})
        if np.max(np.abs(t * step)) < 1e-13 * max(1.0, np.max(np.abs(beta))):
            break           # stalled at rounding level
    if p:
        eig = np.linalg.eigvalsh(info)
        if eig.min() <= 0:
            raise SeparationError("information matrix not positive definite at the estimate", trace)
        se = np.sqrt(np.diag(np.linalg.inv(info)))
        # the score also vanishes as a coefficient runs off to infinity: a huge
        # estimate that is statistically indistinguishable from zero means the
        # partial likelihood is monotone, not maximised
        if np.any((np.abs(beta) > 20) & (np.abs(beta) < se)):
            raise SeparationError("coefficients diverge: monotone partial likelihood", trace)
    else:
        se = np.zeros(0)

    baseline = {}
    shift = float(centre @ beta) if p else 0.0
    for s, st in zip(names, parts):
        eta = st.X @ beta
        c = eta.max()
        s0, _, _ = st.sums(np.exp(eta - c), second=False)
        # Breslow increments for the uncentred design
        baseline[s] = (st.event_times, np.cumsum(st.d / s0 * np.exp(-c - shift)))
    return CoxModel(beta, se, loglik, it, baseline, trace)


def cox_survival(model: CoxModel, X, times, strata=None):
    """S(t | x) = exp(-H0(t) exp(x' beta)) on a grid; rows x times."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.coef.size:
        raise SchemaMismatchError(f"design has {np.shape(X)[-1]} columns, model expects {model.coef.size}")
    H = model.cumulative_hazard(times, strata)
    return np.exp(-np.outer(np.exp(X @ model.coef), H))


def cox_rmst(model: CoxModel, X, tau, strata=None, return_flags=False):
    """Area under the fitted step survival curve on [0, tau], per row.

    ``strata`` is one label for all rows, or a per-row sequence whose
    entries are a label or a tuple of labels; a tuple chains strata that
    cover consecutive time segments (their cumulative hazards add).  With
    ``return_flags`` also reports rows whose curve had to be held constant
    beyond the last event time before ``tau`` (extend-last).
    """
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau}")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if strata is None or isinstance(strata, str):
        per_row = [strata] * n
    else:
        per_row = list(strata)
        if len(per_row) != n:
            raise DataError("one stratum entry per row is required")
    keys = [s if s is None or isinstance(s, str) else tuple(s) for s in per_row]
    out = np.empty(n)
    flags = np.zeros(n, dtype=bool)
    for key in dict.fromkeys(keys):
        rows = np.array([k == key for k in keys])
        chain = _chain(model, key)
        times = np.unique(np.concatenate([model.baseline[s][0] for s in chain]))
        S = cox_survival(model, X[rows], times, key)
        out[rows] = np.clip(step_integral(times, S, tau), 0.0, tau)
        last = times[-1] if times.size else 0.0
        flags[rows] = (tau > last) & (S[:, -1] > 0 if times.size else True)
    return (out, flags) if return_flags else out
