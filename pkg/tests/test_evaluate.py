import numpy as np
import pytest

from conftest import random_survival
from oracles import km_rmst, km_steps
from pvrf.data import from_arrays
from pvrf.errors import DataError, NumericError
from pvrf.evaluate import (cross_validate, fold_assignment, ipc_weights, mse_delta, mse_rmst, pfi, rmse, shapley_mc,
                           wrss)
from pvrf.km import censoring_curve
from pvrf.models import fit_model


def test_metric_examples():
    assert mse_rmst([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]) == pytest.approx(4 / 3)
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))
    assert mse_delta([1.0], [1.0]) == 0.0
    with pytest.raises(DataError):
        mse_rmst([1.0], [1.0, 2.0])
    with pytest.raises(DataError):
        rmse([], [])


def test_ipc_weights_examples():
    # no censoring: G == 1 everywhere -> all weights 1
    ds = from_arrays([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
    np.testing.assert_array_equal(ipc_weights(ds, 10.0).weights, np.ones(4))
    # one early censoring of five: later events weigh 1 / (4/5) = 1.25, the censored row 0
    ds = from_arrays([1.0, 2.0, 3.0, 4.0, 5.0], [0, 1, 1, 1, 1])
    np.testing.assert_allclose(ipc_weights(ds, 10.0).weights, [0, 1.25, 1.25, 1.25, 1.25])
    # rows still at risk beyond tau use G(tau)
    np.testing.assert_allclose(ipc_weights(ds, 2.5).weights, [0, 1.25, 1.25, 1.25, 1.25])
    np.testing.assert_allclose(ipc_weights(ds, 0.5).weights, np.ones(5))
    with pytest.raises(DataError):
        ipc_weights(ds, 0.0)


def test_ipc_weights_zero_censoring_survival_names_row():
    # the only at-risk row at time 3 is censored there, so G(3) = 0 and row 2 (event at 4) is impossible
    ds = from_arrays([1.0, 3.0, 4.0], [1, 0, 1])
    G = censoring_curve(from_arrays([1.0, 3.0], [1, 0]))
    with pytest.raises(NumericError, match="row 2"):
        ipc_weights(ds, 10.0, G)


def oracle_weights(times, status, tau, G_times, G_status):
    steps = km_steps(G_times, [1 - s for s in G_status])

    def G(t, left):
        s = 1.0
        for u, v in steps:
            if u < t or (not left and u == t):
                s = v
        return s
    w = []
    for t, d in zip(times, status):
        if t <= tau:
            w.append(1.0 / G(t, True) if d == 1 else 0.0)
        else:
            w.append(1.0 / G(tau, False))
    return np.array(w)


def test_ipc_weights_vs_loop_oracle(rng):
    ds = random_survival(rng, 80, ties=True)
    for tau in (0.5, 1.0, 1.75):
        exp = oracle_weights(ds.time, ds.status, tau, ds.time, ds.status)
        np.testing.assert_allclose(ipc_weights(ds, tau).weights, exp, rtol=1e-13)


def test_wrss_example_and_invariances(rng):
    ds = from_arrays([1.0, 2.0, 3.0, 4.0, 5.0], [0, 1, 1, 1, 1])
    pred = np.array([9.0, 1.0, 3.0, 3.0, 3.0])
    # weights 0, 1.25 x4; residuals min(T, 3) - pred = (.., 1, 0, 0, 0)
    assert wrss(ds, pred, 3.0) == pytest.approx(1.25 / 5)
    big = random_survival(rng, 60)
    f = lambda X: 0.5 + 0.1 * X[:, 0]
    base = wrss(big, f, 1.0)
    perm = rng.permutation(60)
    assert wrss(big.subset(perm), f, 1.0, censoring_curve(big)) == pytest.approx(base, rel=1e-12)
    dup = big.subset(np.r_[np.arange(60), np.arange(60)])
    assert wrss(dup, f, 1.0) == pytest.approx(base, rel=1e-12)
    with pytest.raises(DataError):
        wrss(ds, np.zeros(3), 3.0)


def test_cross_validation_km_vs_oracle(rng):
    ds = random_survival(rng, 120)
    tau = 1.0
    res = cross_validate(ds, "km", tau, k=4, seed=3)
    folds = fold_assignment(ds, 4, 3)
    np.testing.assert_array_equal(res.folds, folds)
    assert sorted(np.bincount(folds).tolist())[0] >= 29
    for f in range(4):
        tr, te = folds != f, folds == f
        mu = km_rmst(ds.time[tr], ds.status[tr], tau)
        w = oracle_weights(ds.time[te], ds.status[te], tau, ds.time[tr], ds.status[tr])
        exp = np.mean(w * (np.minimum(ds.time[te], tau) - mu) ** 2)
        assert res.wrss.values[f] == pytest.approx(exp, rel=1e-10)
    rows = res.wrss.rows("km")
    assert rows[-3][2] == "mean" and rows[-3][3] == pytest.approx(np.mean(res.wrss.values))


def test_fold_without_events_rejected():
    ds = from_arrays([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [1, 0, 0, 0, 0, 0])
    with pytest.raises(DataError, match="no events"):
        fold_assignment(ds, 2, 0)
    with pytest.raises(DataError):
        fold_assignment(ds, 1, 0)


def test_two_fold_on_tiny_data():
    ds = from_arrays([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
    res = cross_validate(ds, "km", 10.0, k=2, seed=0)
    # no censoring: weights 1; each fold predicts the mean time of the other fold
    t = ds.time
    for f in range(2):
        te, tr = res.folds == f, res.folds != f
        assert res.wrss.values[f] == pytest.approx(np.mean((t[te] - t[tr].mean()) ** 2), rel=1e-12)


def test_pfi_unused_noise_and_signal(rng):
    n = 600
    X = rng.normal(size=(n, 3))
    T = rng.exponential(np.exp(-X[:, 0]))
    C = rng.exponential(2.0, n)
    ds = from_arrays(np.minimum(T, C), (T <= C).astype(int), X)
    tau = 1.0
    G = censoring_curve(ds)
    linear = lambda Z: np.clip(0.6 - 0.25 * Z[:, 0], 0, tau)
    out = pfi(linear, ds, tau, G, np.random.default_rng(0))
    assert out["x2"] == 1.0 and out["x3"] == 1.0
    assert out["x1"] > 1.1
    model = fit_model("gee", ds, tau)
    out = pfi(model, ds, tau, G, np.random.default_rng(1))
    assert 0.9 <= out["x2"] <= 1.2 and 0.9 <= out["x3"] <= 1.2
    assert out["x1"] > 1.1
    with pytest.raises(NumericError):
        pfi(lambda Z: np.minimum(ds.time, tau), ds, tau, G, rng)


def test_cross_validation_importance_and_contrast(rng):
    n = 200
    X = np.column_stack([rng.normal(size=n), rng.integers(0, 2, n)])
    T = rng.exponential(np.exp(-X[:, 0] + X[:, 1]))
    ds = from_arrays(np.minimum(T, 3.0), (T <= 3.0).astype(int), X, names=["x", "trt"],
                     kinds=["continuous", "binary"], levels={"trt": ("A", "B")}, treatment="trt")
    res = cross_validate(ds, "gee", 1.0, k=5, seed=1, level_a="A", level_b="B", importance=True)
    assert len(res.contrast.values) == 5 and res.contrast.mean < 0   # B lives longer
    assert set(res.pfi) == {"x", "trt"} and res.pfi["x"].mean > 1.0


def test_shapley_constant_model_is_zero(rng):
    bg = rng.normal(size=(30, 4))
    r = shapley_mc(lambda Z: np.full(len(Z), 2.0), bg[0] + 1, bg, m=50, rng=rng)
    np.testing.assert_array_equal(r.values, np.zeros(4))
    assert r.base == 2.0 and r.prediction == 2.0


def test_shapley_additive_model_exact(rng):
    beta = np.array([1.0, -2.0, 0.0, 0.5])
    f = lambda Z: Z @ beta + 3.0
    bg = rng.normal(size=(1, 4))
    x = rng.normal(size=4)
    r = shapley_mc(f, x, bg, m=7, rng=rng)
    # single background row: contribution of j is beta_j (x_j - z_j) in every order
    np.testing.assert_allclose(r.values, beta * (x - bg[0]), atol=1e-12)
    np.testing.assert_allclose(r.se, 0.0, atol=1e-12)


def test_shapley_local_accuracy(rng):
    f = lambda Z: np.exp(-np.abs(Z[:, 0] * Z[:, 1])) + Z[:, 2] ** 2
    bg = rng.normal(size=(1, 3))
    x = np.array([0.3, -1.2, 0.8])
    r = shapley_mc(f, x, bg, m=40, rng=rng)
    assert r.values.sum() == pytest.approx(r.prediction - r.base, abs=1e-12)
    bg = rng.normal(size=(50, 3))
    r = shapley_mc(f, x, bg, m=4000, rng=rng)
    assert abs(r.values.sum() - (r.prediction - r.base)) < 4 * r.total_se + 1e-12
    with pytest.raises(DataError):
        shapley_mc(f, x, np.empty((0, 3)))
    with pytest.raises(DataError):
        shapley_mc(f, x, bg, m=0)


def test_ipc_weights_when_censoring_curve_reaches_zero_before_tau():
    # last row censored: G drops to 0, but no row is at risk beyond tau
    ds = from_arrays([1.0, 2.0], [1, 0])
    np.testing.assert_array_equal(ipc_weights(ds, 3.0).weights, [1.0, 0.0])
