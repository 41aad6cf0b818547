import math
from dataclasses import replace

import numpy as np
import pytest

from oracles import km_rmst
from pvrf.simulate import default_scenarios, simulate_dataset, theoretical_rmst
from pvrf.study import AGG_FIELDS, LONG_FIELDS, StudyConfig, calibrated_specs, run_study, write_table


@pytest.fixture(scope="module")
def spec():
    return calibrated_specs([1], [0.5], pilot_n=20_000)[0]


def test_km_rmse_matches_oracle(spec):
    cfg = StudyConfig(n_train=150, n_test=100, reps=2, quantiles=(0.5, 0.8), methods=("km",), seed=11)
    long, agg = run_study(None, None, cfg, specs=[spec])
    assert len(long) == 4 and all(r["error"] == "" for r in long)
    for rep in range(2):
        rng = np.random.default_rng(np.random.SeedSequence(11, spawn_key=(1, 50, rep)))
        train = simulate_dataset(spec, 150, rng).dataset
        test = simulate_dataset(spec, 100, rng).dataset
        for q, tau in ((0.5, spec.tau_grid[0]), (0.8, spec.tau_grid[3])):
            mu = km_rmst(train.time, train.status, tau)
            truth = theoretical_rmst(spec, test.X, tau)
            row = next(r for r in long if r["rep"] == rep and r["quantile"] == f"q{int(q * 100)}")
            assert row["rmse"] == pytest.approx(math.sqrt(np.mean((truth - mu) ** 2)), rel=1e-10)
            assert row["rmse_delta"] == pytest.approx(
                math.sqrt(np.mean((theoretical_rmst(spec, _force(test.X, 0), tau)
                                   - theoretical_rmst(spec, _force(test.X, 1), tau)) ** 2)), rel=1e-10)
    by_q = {r["quantile"]: r for r in agg}
    vals = [r["rmse"] for r in long if r["quantile"] == "q50"]
    assert by_q["q50"]["mean_rmse"] == pytest.approx(np.mean(vals))
    assert by_q["q50"]["sd_rmse"] == pytest.approx(np.std(vals, ddof=1))
    assert by_q["q50"]["n_ok"] == 2 and by_q["q50"]["n_failed"] == 0


def _force(X, code):
    X = np.array(X)
    X[:, 10] = code
    return X


def test_study_is_reproducible_and_parallel_safe(spec, tmp_path):
    cfg = StudyConfig(n_train=120, n_test=60, reps=3, quantiles=(0.5,), methods=("km", "gee", "cox"), seed=5)
    a = run_study(None, None, cfg, specs=[spec])
    b = run_study(None, None, cfg, n_jobs=2, specs=[spec])
    for tag, (long, agg) in (("a", a), ("b", b)):
        write_table(long, LONG_FIELDS, tmp_path / f"long_{tag}.csv")
        write_table(agg, AGG_FIELDS, tmp_path / f"agg_{tag}.csv")
    assert (tmp_path / "long_a.csv").read_bytes() == (tmp_path / "long_b.csv").read_bytes()
    assert (tmp_path / "agg_a.csv").read_bytes() == (tmp_path / "agg_b.csv").read_bytes()
    c = run_study(None, None, replace(cfg, seed=6), specs=[spec])
    assert [r["rmse"] for r in c[0]] != [r["rmse"] for r in a[0]]


def test_failed_fit_is_recorded_not_raised(spec):
    cfg = StudyConfig(n_train=40, n_test=20, reps=1, quantiles=(0.5,), methods=("reference",), seed=1)
    bad = replace(spec, psi={}, phi={})
    long, agg = run_study(None, None, cfg, specs=[bad])
    assert len(long) == 1
    assert agg[0]["n_ok"] + agg[0]["n_failed"] == 1


def test_calibrated_specs_accepts_numbers_and_specs():
    s = default_scenarios()[1]
    a = calibrated_specs([2], [0.25], pilot_n=5000)
    b = calibrated_specs([s], [0.25], pilot_n=5000)
    assert a[0].lam_c == b[0].lam_c and a[0].censoring == 0.25
    with pytest.raises(ValueError):
        run_study([1], [0.5], StudyConfig(reps=0))
