import numpy as np
import pytest

from oracles import km_rmst as oracle_rmst, km_steps
from pvrf.data import from_arrays
from pvrf.errors import DataError
from pvrf.km import (StepSurvivalCurve, censoring_curve, curve_eval, curve_eval_left, km_curve, km_rmst,
                     rmst_from_curve)


def test_all_events():
    c = km_curve([1, 2, 3], [1, 1, 1])
    np.testing.assert_allclose(c.survival, [2 / 3, 1 / 3, 0.0], rtol=0, atol=1e-15)
    assert c.n_at_risk.tolist() == [3, 2, 1] and c.n_events.tolist() == [1, 1, 1]


def test_no_events_is_flat():
    c = km_curve([1, 2], [0, 0])
    assert c.jump_times.size == 0
    assert curve_eval(c, 5.0) == 1.0
    assert rmst_from_curve(c, 4.0).value == 4.0


def test_tie_events_before_censoring():
    c = km_curve([1, 1, 2], [1, 0, 1])
    assert curve_eval(c, 1.0) == pytest.approx(2 / 3, abs=1e-15)
    assert curve_eval(c, 2.0) == 0.0


def test_censoring_curve_is_flipped_km(rng):
    n = 50
    ds = from_arrays(np.ceil(rng.exponential(1, n) * 5) / 5, rng.integers(0, 2, n))
    g, k = censoring_curve(ds), km_curve(ds.time, 1 - ds.status)
    np.testing.assert_array_equal(g.jump_times, k.jump_times)
    np.testing.assert_array_equal(g.survival, k.survival)


def test_censoring_curve_extremes():
    ds = from_arrays([1.0, 2.0, 3.0], [1, 1, 1])
    assert censoring_curve(ds).jump_times.size == 0
    ds0 = from_arrays([1.0, 2.0, 3.0], [0, 0, 0])
    np.testing.assert_allclose(censoring_curve(ds0).survival, [2 / 3, 1 / 3, 0.0])


def test_rmst_hand_integration():
    c = km_curve([1, 2, 3], [1, 1, 1])
    assert rmst_from_curve(c, 3.0).value == pytest.approx(2.0, abs=1e-15)
    assert rmst_from_curve(c, 1e-9).value == pytest.approx(1e-9)
    with pytest.raises(DataError):
        rmst_from_curve(c, 0.0)


def test_extend_last_beyond_final_time():
    c = km_curve([1, 2, 3], [1, 0, 0])          # S = 2/3 from t=1, no later jumps
    assert rmst_from_curve(c, 10.0).value == pytest.approx(1 + 9 * 2 / 3)


def test_curve_eval_continuity():
    c = km_curve([1, 2, 3], [1, 1, 1])
    assert curve_eval(c, 0.5) == 1.0
    assert curve_eval(c, 1.0) == pytest.approx(2 / 3)
    assert curve_eval_left(c, 1.0) == 1.0
    assert curve_eval_left(c, 2.0) == pytest.approx(2 / 3)
    with pytest.raises(DataError):
        curve_eval(c, -1.0)


def test_uncensored_rmst_is_mean_of_truncated_times(rng):
    for _ in range(20):
        t = rng.exponential(1, 100)
        tau = float(rng.uniform(0.2, 3))
        assert km_rmst(t, np.ones(100), tau) == pytest.approx(np.minimum(t, tau).mean(), abs=1e-13)


def test_matches_loop_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(2, 40))
        t = np.ceil(rng.exponential(1, n) * 3) / 3
        d = rng.integers(0, 2, n)
        c = km_curve(t, d)
        steps = km_steps(t, d)
        np.testing.assert_allclose(c.jump_times, [s[0] for s in steps])
        np.testing.assert_allclose(c.survival, [s[1] for s in steps], atol=1e-14)
        tau = float(rng.uniform(0.1, 4))
        assert km_rmst(t, d, tau) == pytest.approx(oracle_rmst(t, d, tau), abs=1e-13)


def test_empty_and_bad_curves():
    with pytest.raises(DataError):
        km_curve([], [])
    with pytest.raises(DataError):
        StepSurvivalCurve(np.array([1.0, 2.0]), np.array([0.5, 0.7]))


def test_curve_csv(tmp_path):
    c = km_curve([1, 2, 3], [1, 1, 1])
    path = tmp_path / "c.csv"
    c.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time,survival" and len(lines) == 4
