"""Leave-one-out jackknife pseudo-values for the RMST."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .km import km_curve, rmst_from_curve


@dataclass(frozen=True)
class PseudoValueVector:
    tau: float
    values: np.ndarray

    def __len__(self):
        return self.values.size


def _check(dataset, tau):
    if dataset.n < 2:
        raise DataError("pseudo-values need at least two individuals")
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau}")


def pseudo_values(dataset, tau: float, n_jobs: int = 1) -> PseudoValueVector:
    """Direct definition: n * RMST(all) - (n - 1) * RMST(all but i).

    Recomputes the Kaplan-Meier curve once per individual, O(n^2).
    """
    _check(dataset, tau)
    time, status = dataset.time, dataset.status
    n = time.size
    full = rmst_from_curve(km_curve(time, status), tau).value

    def loo(i):
        keep = np.arange(n) != i
        return rmst_from_curve(km_curve(time[keep], status[keep]), tau).value

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            rest = np.fromiter(ex.map(loo, range(n)), float, n)
    else:
        rest = np.fromiter(map(loo, range(n)), float, n)
    return PseudoValueVector(float(tau), n * full - (n - 1) * rest)


def rmst_pseudo(time, status, tau):
    """Pseudo-values without refitting: O(n log n) after sorting.

    Removing individual i at distinct time u_k only lowers the risk counts at
    u_1..u_k and, if i had an event, the event count at u_k.  Factors after
    u_k are untouched, so their contribution is a suffix quantity shared by
    every i in the same group.
    """
    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=float)
    n = time.size
    u, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=status, minlength=u.size)
    m = np.bincount(inv, minlength=u.size).astype(float)
    Y = np.cumsum(m[::-1])[::-1]
    K = u.size

    clipped = np.minimum(u, tau)
    w0 = clipped[0]
    w = np.diff(np.append(clipped, tau))          # S is constant on [u_k, u_{k+1}) within [0, tau]

    r = 1.0 - d / Y
    full = w0 + np.cumprod(r) @ w

    # suffix sums B_a = sum_{k>=a} prod_{a<j<=k} r_j * w_k
    B = np.empty(K)
    B[-1] = w[-1]
    for a in range(K - 2, -1, -1):
        B[a] = w[a] + r[a + 1] * B[a + 1]

    # prefix products with one fewer at risk; Y - 1 == 0 only where no one else is left
    Ym1 = Y - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        r_minus = np.where(Ym1 > 0, 1.0 - d / Ym1, 1.0)
    P = np.cumprod(r_minus)
    P_before = np.concatenate(([1.0], P[:-1]))              # prod over j < k
    C = np.concatenate(([0.0], np.cumsum(P * w)[:-1]))       # sum over k' < k of P_k' w_k'

    k = inv
    d_loo = d[k] - status
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(Ym1[k] > 0, 1.0 - d_loo / Ym1[k], 1.0)
    loo = w0 + C[k] + P_before[k] * f * B[k]
    return n * full - (n - 1) * loo


def pseudo_values_fast(dataset, tau: float) -> PseudoValueVector:
    """Same values as :func:`pseudo_values` via incremental risk-set updates."""
    _check(dataset, tau)
    return PseudoValueVector(float(tau), rmst_pseudo(dataset.time, dataset.status, tau))
