import numpy as np
import pytest

import reference_splits as ref
from pvrf.forest.splits import (cart_best_split, cart_split_score, cond_best_split, cond_select_variable,
                                cond_test_statistics)


def node(rng, m, levels=(0, 2, 5, 15), ties=True):
    """Mixed node: one continuous column, then categorical columns with the given level counts (0 = continuous)."""
    cols, is_cat, n_lev = [], [], []
    for k in levels:
        if k == 0:
            x = rng.normal(size=m)
            if ties:
                x = np.round(x, 1)
            cols.append(x)
            is_cat.append(False)
            n_lev.append(0)
        else:
            cols.append(rng.integers(0, k, m).astype(float))
            is_cat.append(True)
            n_lev.append(k)
    X = np.column_stack(cols)
    y = X[:, 0] + (X[:, 1] == 1) + rng.normal(size=m)
    return X, y, np.array(is_cat), np.array(n_lev)


def same_split(a, b):
    if a is None or b is None:
        return a is None and b is None
    if a.variable != b.variable:
        return False
    if a.threshold is not None:
        return b.threshold is not None and np.isclose(a.threshold, b.threshold, rtol=0, atol=1e-12)
    return set(a.left_levels) == set(b.left_levels)


def test_split_score_examples():
    assert cart_split_score([0, 0, 10, 10], [True, True, False, False]) == 0.0
    assert cart_split_score([0, 10], [True, False]) == 0.0
    assert cart_split_score([1, 2, 3, 4], [True, False, False, False]) == 2.0
    with pytest.raises(ValueError):
        cart_split_score([1, 2], [True, True])


def test_cart_small_examples():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    s = cart_best_split(X, np.array([0.0, 0, 10, 10]), [0], [False], [0])
    assert s.variable == 0 and s.threshold == 2.5 and s.score == 0.0
    assert cart_best_split(np.ones((4, 1)), np.array([0.0, 0, 10, 10]), [0], [False], [0]) is None
    X2 = np.column_stack([X[:, 0], X[:, 0]])
    assert cart_best_split(X2, np.array([0.0, 0, 10, 10]), [0, 1], [False, False], [0, 0]).variable == 0


def test_cond_split_small_examples():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0.0, 0, 10, 10])
    assert cond_best_split(X, y, 0, [False], [0], min_leaf=1).threshold == 2.5
    assert cond_best_split(X, y, 0, [False], [0], min_leaf=3) is None
    # symmetric outcome: x<=1.5 and x<=3.5 give the same |standardised sum|; lowest threshold wins
    s = cond_best_split(X, np.array([0.0, 5, 5, 10]), 0, [False], [0], min_leaf=1)
    assert s.threshold == 1.5


def test_cart_matches_reference(rng):
    for _ in range(300):
        m = int(rng.integers(5, 80))
        X, y, is_cat, n_lev = node(rng, m)
        cand = np.sort(rng.choice(X.shape[1], int(rng.integers(1, 5)), replace=False))
        a = cart_best_split(X, y, cand, is_cat, n_lev)
        b = ref.cart_best_split(X, y, cand, is_cat, n_lev)
        assert same_split(a, b)
        if a is not None:
            assert a.score == pytest.approx(b.score, rel=1e-9, abs=1e-12)


def test_cond_split_matches_reference(rng):
    for _ in range(300):
        m = int(rng.integers(5, 80))
        X, y, is_cat, n_lev = node(rng, m)
        v = int(rng.integers(0, X.shape[1]))
        leaf = int(rng.integers(1, 8))
        a = cond_best_split(X, y, v, is_cat, n_lev, leaf)
        b = ref.cond_best_split(X, y, v, is_cat, n_lev, leaf)
        assert same_split(a, b)
        if a is not None:
            assert a.score == pytest.approx(b.score, rel=1e-9)


def test_statistics_match_reference(rng):
    B = 2000
    for _ in range(40):
        X, y, is_cat, n_lev = node(rng, int(rng.integers(20, 120)))
        cand = np.arange(X.shape[1])
        a = cond_test_statistics(X, y, cand, is_cat, n_lev, B, np.random.default_rng(1))
        b = ref.cond_test_statistics(X, y, cand, is_cat, B, np.random.default_rng(2))
        assert a.keys() == b.keys()
        for j in a:
            assert a[j][0] == pytest.approx(b[j][0], rel=1e-10)
            # different permutation streams: p-values agree up to Monte-Carlo error
            p = max(b[j][1], 1 / B)
            assert abs(a[j][1] - b[j][1]) <= 5 * np.sqrt(2 * p * (1 - p) / B) + 2 / B


def test_select_signal_variable(rng):
    m = 200
    X = rng.normal(size=(m, 2))
    y = 5.0 * X[:, 0]
    j, p = cond_select_variable(X, y, [0, 1], [False, False], [0, 0], 999, rng)
    assert j == 0 and p <= 0.01


def test_select_perfect_binary_over_weak_continuous(rng):
    m = 60
    b = np.repeat([0.0, 1.0], m // 2)
    y = np.where(b == 1, 3.0, 1.0)
    x = 0.05 * y + rng.normal(size=m)
    j, _ = cond_select_variable(np.column_stack([x, b]), y, [0, 1], [False, True], [0, 2], 999, rng)
    assert j == 1


def test_null_selection_runs(rng):
    X, _, is_cat, n_lev = node(rng, 50)
    sel = cond_select_variable(X, rng.normal(size=50), np.arange(4), is_cat, n_lev, 199, rng)
    assert sel is not None and 0 < sel[1] <= 1


def test_constant_candidates():
    X = np.ones((10, 2))
    y = np.arange(10.0)
    assert cond_select_variable(X, y, [0, 1], [False, True], [0, 3], 99, np.random.default_rng(0)) is None
    assert cond_best_split(X, np.ones(10), 0, [False, False], [0, 0], 1) is None


def test_shift_invariance(rng):
    for _ in range(30):
        X, y, is_cat, n_lev = node(rng, 60)
        cand = np.arange(X.shape[1])
        assert same_split(cart_best_split(X, y, cand, is_cat, n_lev), cart_best_split(X, y + 7.5, cand, is_cat, n_lev))
        a = cond_select_variable(X, y, cand, is_cat, n_lev, 199, np.random.default_rng(3))
        b = cond_select_variable(X, y + 7.5, cand, is_cat, n_lev, 199, np.random.default_rng(3))
        assert a[0] == b[0]


def test_absent_levels_follow_larger_daughter():
    # 4 declared levels, only 0/1/2 present; level 3 must go with the larger side
    x = np.array([0, 0, 0, 0, 1, 1, 2, 2, 2], dtype=float)[:, None]
    y = np.array([0, 0, 0, 0, 0, 0, 9, 9, 9], dtype=float)
    s = cart_best_split(x, y, [0], [True], [4])
    assert s.goes_left(np.array([2.0])).item() != s.goes_left(np.array([0.0])).item()
    big_side_left = bool(s.goes_left(np.array([0.0])).item())
    assert bool(s.goes_left(np.array([3.0])).item()) == big_side_left
