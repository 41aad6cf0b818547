"""Monte-Carlo benchmark: train/test replicates per scenario and censoring level.

For every (scenario, censoring, rep) a training and a test set are drawn
from a generator seeded by (seed, scenario, censoring, rep), so results do
not depend on the order or parallelism in which replicates run.  Each method
is fitted on the training set at every horizon and scored on the test set
against the theoretical RMST and treatment contrast.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .effects import individual_contrasts
from .errors import PvrfError
from .forest import ForestParams
from .models import fit_model
from .simulate import (QUANTILES, TREATMENT_LEVELS, calibrate_scenario, default_scenarios, simulate_dataset, theoretical_contrast,
                       theoretical_rmst)

ALL_METHODS = ("cart", "conditional", "gee", "gee-log", "cox", "lognormal", "reference")
TAU_FREE = ("cox", "lognormal", "reference")     # fit does not depend on tau
CALIBRATION_SEED = 0

LONG_FIELDS = ("scenario", "censoring", "quantile", "tau", "method", "rep", "rmse", "rmse_delta", "error")
AGG_FIELDS = ("scenario", "censoring", "quantile", "tau", "method", "mean_rmse", "mean_rmse_delta",
              "sd_rmse", "sd_rmse_delta", "n_ok", "n_failed")


@dataclass(frozen=True)
class StudyConfig:
    n_train: int = 1000
    n_test: int = 1000
    reps: int = 100
    quantiles: tuple = QUANTILES
    methods: tuple = ALL_METHODS
    forest: ForestParams = ForestParams()
    tune: bool = False
    seed: int = 0
    pilot_n: int = 100_000


def _seed(*key) -> int:
    ss = np.random.SeedSequence(int(key[0]), spawn_key=tuple(int(k) for k in key[1:]))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _one_rep(args):
    spec, cfg, rep = args
    cens = int(round(spec.censoring * 100))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(spec.scenario, cens, rep)))
    train = simulate_dataset(spec, cfg.n_train, rng).dataset
    test = simulate_dataset(spec, cfg.n_test, rng).dataset
    a, b = TREATMENT_LEVELS
    rows = []
    cache = {}
    for qi, q in enumerate(cfg.quantiles):
        tau = spec.tau_grid[QUANTILES.index(q)]
        truth = theoretical_rmst(spec, test.X, tau)
        truth_delta = theoretical_contrast(spec, test.X, tau)
        for mi, method in enumerate(cfg.methods):
            row = {"scenario": spec.scenario, "censoring": cens, "quantile": f"q{int(round(q * 100))}",
                   "tau": tau, "method": method, "rep": rep}
            try:
                if method in TAU_FREE and method in cache:
                    model = replace(cache[method], tau=tau)
                else:
                    opts = {}
                    if method in ("cart", "conditional"):
                        opts = {"params": replace(cfg.forest, seed=_seed(cfg.seed, spec.scenario, cens, rep, qi, mi)),
                                "tune": cfg.tune}
                    elif method == "reference":
                        opts = {"terms": spec.informative_terms(),
                                "t0": spec.t0 if spec.time_varying else None}
                    model = fit_model(method, train, tau, **opts)
                    if method in TAU_FREE:
                        cache[method] = model
                pred = model.predict(test.X)
                delta = individual_contrasts(model, test, a, b, tau).individual
                row["rmse"] = math.sqrt(float(np.mean((pred - truth) ** 2)))
                row["rmse_delta"] = math.sqrt(float(np.mean((delta - truth_delta) ** 2)))
                row["error"] = ""
            except (PvrfError, np.linalg.LinAlgError, FloatingPointError) as exc:
                row["rmse"] = row["rmse_delta"] = float("nan")
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def calibrated_specs(scenarios, censoring_levels, pilot_n=100_000):
    """One calibrated spec per (scenario, censoring) from a fixed pilot replicate.

    ``scenarios`` holds scenario numbers (default coefficients) or specs.
    """
    defaults = default_scenarios()
    specs = [defaults[s - 1] if isinstance(s, (int, np.integer)) else s for s in scenarios]
    return [calibrate_scenario(s, c, pilot_n=pilot_n, seed=CALIBRATION_SEED)
            for s in specs for c in censoring_levels]


def run_study(scenarios, censoring_levels, cfg: StudyConfig, n_jobs=1, specs=None):
    """Long table (one row per scenario/censoring/tau/method/rep) and its aggregate."""
    if cfg.reps < 1:
        raise ValueError("reps must be at least 1")
    if specs is None:
        specs = calibrated_specs(scenarios, censoring_levels, cfg.pilot_n)
    tasks = [(s, cfg, r) for s in specs for r in range(cfg.reps)]
    if n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            parts = list(ex.map(_one_rep, tasks))
    else:
        parts = [_one_rep(t) for t in tasks]
    long = [row for part in parts for row in part]
    return long, aggregate(long)


def aggregate(long_rows):
    groups = {}
    for r in long_rows:
        key = (r["scenario"], r["censoring"], r["quantile"], r["tau"], r["method"])
        groups.setdefault(key, []).append(r)
    out = []
    for key, rows in groups.items():
        ok = [r for r in rows if not r["error"]]
        rm = np.array([r["rmse"] for r in ok])
        rd = np.array([r["rmse_delta"] for r in ok])
        nan = float("nan")
        out.append(dict(zip(AGG_FIELDS, key + (
            float(rm.mean()) if ok else nan, float(rd.mean()) if ok else nan,
            float(rm.std(ddof=1)) if len(ok) > 1 else nan, float(rd.std(ddof=1)) if len(ok) > 1 else nan,
            len(ok), len(rows) - len(ok)))))
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(rows, fields, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])
