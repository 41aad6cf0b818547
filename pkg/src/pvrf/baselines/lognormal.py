"""Lognormal accelerated failure time model fitted by censored maximum likelihood.

log T = x' beta + sigma * eps with eps ~ N(0, 1).  Events contribute the
normal log-density of z = (log t - x' beta) / sigma (minus log sigma),
censored rows log(1 - Phi(z)).  Newton iterations run on (beta, log sigma)
with the analytic Hessian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .._quad import adaptive_simpson
from ..data import design_matrix
from ..errors import ConvergenceError, DataError, SchemaMismatchError

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class LognormalAft:
    coef: np.ndarray            # includes the intercept when the design does
    sigma: float
    loglik: float
    n_iter: int
    trace: list = field(default_factory=list)

    def location(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.coef.size:
            raise SchemaMismatchError(f"design has {np.shape(X)[-1]} columns, model expects {self.coef.size}")
        return X @ self.coef


def _mills(z):
    """phi(z) / (1 - Phi(z)), stable in both tails."""
    return np.exp(-0.5 * z * z - _LOG_SQRT_2PI - log_ndtr(-z))


def _loglik_parts(theta, X, y, event):
    p = X.shape[1]
    beta, s = theta[:p], theta[p]
    sigma = math.exp(s)
    z = (y - X @ beta) / sigma
    ll = np.where(event, -0.5 * z * z - _LOG_SQRT_2PI - s, log_ndtr(-z))
    return float(ll.sum()), z, sigma


def _derivatives(theta, X, y, event):
    p = X.shape[1]
    ll, z, sigma = _loglik_parts(theta, X, y, event)
    lam = np.where(event, 0.0, _mills(np.where(event, 0.0, z)))
    # d ll / d beta = a * x / sigma, d ll / d s = b
    a = np.where(event, z, lam)
    b = np.where(event, z * z - 1.0, lam * z)
    grad = np.concatenate((X.T @ a / sigma, [b.sum()]))
    dlam = lam * (lam - z)
    h_bb = np.where(event, -1.0, -dlam)                       # times x x' / sigma^2
    h_bs = np.where(event, -2.0 * z, -(dlam * z + lam))      # times x / sigma
    h_ss = np.where(event, -2.0 * z * z, -z * (dlam * z + lam))
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = (X * h_bb[:, None]).T @ X / sigma**2
    H[:p, p] = H[p, :p] = X.T @ h_bs / sigma
    H[p, p] = h_ss.sum()
    return ll, grad, H


def fit_lognormal(dataset, X=None, max_iter=100, tol=1e-8) -> LognormalAft:
    """Censored-normal MLE on log observed times.

    ``X`` is the numeric design including an intercept column; by default
    the dataset's covariate design with an intercept.

    Starts from least squares on all log times and stops when the gradient
    norm drops below ``tol``.  Steps that lower the likelihood are halved up
    to 10 times.
    """
    y = np.log(np.asarray(dataset.time, dtype=float))
    event = np.asarray(dataset.status).astype(bool)
    if X is None:
        X = design_matrix(dataset.schema, dataset.X, intercept=True)
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if y.size != n:
        raise SchemaMismatchError("design rows must match the number of observations")
    if n <= p + 2:
        raise DataError(f"need more than {p + 2} observations for {p} coefficients")
    if not event.any():
        raise DataError("no events: the lognormal likelihood has no maximum")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    theta = np.concatenate((beta, [math.log(max(resid.std(), 1e-3))]))

    ll, grad, H = _derivatives(theta, X, y, event)
    trace = [{"iter": 0, "loglik": ll, "grad_norm": float(np.linalg.norm(grad))}]
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) < tol:
            break
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian in lognormal fit", trace) from None
        if grad @ step <= 0:            # not an ascent direction: fall back to gradient ascent
            step = grad / max(1.0, np.abs(H).max())
        t = 1.0
        for _ in range(11):
            cand = theta + t * step
            new = _loglik_parts(cand, X, y, event)[0]
            if np.isfinite(new) and new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        else:
            raise ConvergenceError("lognormal fit: no step increases the likelihood", trace)
        theta = cand
        ll, grad, H = _derivatives(theta, X, y, event)
        trace.append({"iter": it, "loglik": ll, "grad_norm": float(np.linalg.norm(grad))})
        if math.exp(theta[-1]) < 1e-8:
            raise ConvergenceError("scale parameter collapsed towards zero", trace)
    else:
        if np.linalg.norm(grad) >= tol:
            raise ConvergenceError(f"lognormal fit did not converge in {max_iter} iterations", trace)
    return LognormalAft(theta[:p], math.exp(theta[p]), ll, len(trace) - 1, trace)


def lognormal_survival(t, location, sigma):
    if t <= 0:
        return 1.0
    return 0.5 * math.erfc((math.log(t) - location) / (sigma * math.sqrt(2.0)))


def lognormal_rmst(model: LognormalAft, X, tau, tol=1e-8) -> np.ndarray:
    """Integral of 1 - Phi((log t - x' beta) / sigma) over [0, tau] by adaptive Simpson."""
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau}")
    loc = np.atleast_1d(model.location(np.atleast_2d(X)))
    out = np.empty(loc.size)
    for i, m in enumerate(loc):
        median = math.exp(m) if m < 700 else math.inf
        out[i] = adaptive_simpson(lambda t: lognormal_survival(t, m, model.sigma), 0.0, tau, tol,
                                  breakpoints=(median,))
    return np.clip(out, 0.0, tau)
