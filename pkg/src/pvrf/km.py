"""Kaplan-Meier curves and restricted mean survival time."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class StepSurvivalCurve:
    """Right-continuous step function; S(t) = 1 before the first jump.

    Beyond the last jump the curve is held constant ("extend-last").
    """

    jump_times: np.ndarray
    survival: np.ndarray
    n_at_risk: np.ndarray | None = None
    n_events: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        s = np.asarray(self.survival, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise DataError("jump_times and survival must be 1-d of equal length")
        if np.any(np.diff(t) <= 0):
            raise DataError("jump times must be strictly increasing")
        if np.any((s < 0) | (s > 1)) or np.any(np.diff(s) > 0):
            raise DataError("survival must be non-increasing within [0, 1]")
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "survival", s)

    def __call__(self, t):
        return curve_eval(self, t)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "survival"])
            for t, s in zip(self.jump_times, self.survival):
                w.writerow([repr(float(t)), repr(float(s))])


@dataclass(frozen=True)
class RmstEstimate:
    value: float
    tau: float


def km_curve(times, status) -> StepSurvivalCurve:
    """Product-limit estimator.

    At tied times events are processed before censorings, i.e. individuals
    censored at t are still in the risk set for events at t.
    """
    times = np.asarray(times, dtype=float)
    status = np.asarray(status)
    if times.size == 0:
        raise DataError("km_curve needs at least one observation")
    if status.shape != times.shape:
        raise DataError("times and status differ in length")
    uniq, inv = np.unique(times, return_inverse=True)
    d = np.bincount(inv, weights=status, minlength=uniq.size)
    m = np.bincount(inv, minlength=uniq.size)
    at_risk = np.cumsum(m[::-1])[::-1]
    jumps = d > 0
    factors = 1.0 - d[jumps] / at_risk[jumps]
    surv = np.cumprod(factors)
    return StepSurvivalCurve(uniq[jumps], np.clip(surv, 0.0, 1.0), at_risk[jumps].astype(np.int64), d[jumps].astype(np.int64))


def censoring_curve(dataset) -> StepSurvivalCurve:
    """KM of the censoring distribution (status flipped)."""
    return km_curve(dataset.time, 1 - np.asarray(dataset.status))


def curve_eval(curve: StepSurvivalCurve, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataError("curve evaluated at negative time")
    idx = np.searchsorted(curve.jump_times, t, side="right")
    vals = np.concatenate(([1.0], curve.survival))[idx]
    return vals if vals.ndim else float(vals)


def curve_eval_left(curve: StepSurvivalCurve, t):
    """Left limit S(t-)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataError("curve evaluated at negative time")
    idx = np.searchsorted(curve.jump_times, t, side="left")
    vals = np.concatenate(([1.0], curve.survival))[idx]
    return vals if vals.ndim else float(vals)


def step_integral(jump_times, survival, tau):
    """Integral over [0, tau] of step curves sharing ``jump_times``.

    ``survival`` may be 2-d (rows are curves).
    """
    jump_times = np.asarray(jump_times, dtype=float)
    survival = np.asarray(survival, dtype=float)
    keep = jump_times < tau
    t = jump_times[keep]
    s = survival[..., keep]
    edges = np.concatenate(([0.0], t, [tau]))
    widths = np.diff(edges)
    ones = np.ones(s.shape[:-1] + (1,))
    return np.concatenate((ones, s), axis=-1) @ widths


def rmst_from_curve(curve: StepSurvivalCurve, tau: float) -> RmstEstimate:
    """Exact area under the step curve on [0, tau]."""
    if not tau > 0:
        raise DataError(f"tau must be positive, got {tau}")
    value = float(step_integral(curve.jump_times, curve.survival, tau))
    return RmstEstimate(min(max(value, 0.0), tau), float(tau))


def km_rmst(times, status, tau) -> float:
    return rmst_from_curve(km_curve(times, status), tau).value
