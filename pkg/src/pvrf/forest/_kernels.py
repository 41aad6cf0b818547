"""Compiled per-node split kernels.

One call evaluates every candidate variable of a node, so tree growth pays
the Python overhead once per node rather than once per candidate rule.
Permutations are drawn from a splitmix64 stream seeded by the caller (one
draw from the tree's generator per node), which keeps results a pure
function of the tree seed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)


@njit(cache=True)
def _splitmix(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return state, z ^ (z >> _S31)


@njit(cache=True)
def _first_min(a, n, tol):
    """Index of the first entry within ``tol`` (relative) of the minimum of a[:n]; -1 if none finite."""
    lo = np.inf
    for i in range(n):
        if a[i] < lo:
            lo = a[i]
    if lo == np.inf:
        return -1
    cut = lo + tol * max(abs(lo), 1.0)
    for i in range(n):
        if a[i] <= cut:
            return i
    return -1


@njit(cache=True)
def _level_stats(x, yc, n_lev):
    counts = np.zeros(n_lev)
    sums = np.zeros(n_lev)
    for i in range(x.size):
        c = int(x[i])
        counts[c] += 1.0
        sums[c] += yc[i]
    return counts, sums


@njit(cache=True)
def _categorical_scan(x, yc, n_lev, max_exhaustive, tie_rtol, criterion, min_leaf, v):
    """Best level subset for one categorical column.

    criterion 0 is the CART sum of squares (minimised), 1 the standardised
    left sum (maximised, subject to ``min_leaf``).  Returns (score, left
    table over all levels); score is +inf when there is no admissible rule.
    """
    m = x.size
    counts, sums = _level_stats(x, yc, n_lev)
    present = np.flatnonzero(counts > 0)
    k = present.size
    left = np.zeros(n_lev, dtype=np.bool_)
    if k < 2:
        return np.inf, left
    total = 0.0
    for i in range(m):
        total += yc[i] * yc[i]
    exhaustive = k <= max_exhaustive
    if exhaustive:
        n_cand = (1 << (k - 1)) - 1
        order = present
    else:
        n_cand = k - 1
        means = sums[present] / counts[present]
        order = present[np.argsort(means, kind="mergesort")]
    scores = np.empty(n_cand)
    nl = 0.0
    sl = 0.0
    for c in range(n_cand):
        if exhaustive:
            nl = 0.0
            sl = 0.0
            mask = c + 1
            for b in range(k - 1):
                if (mask >> b) & 1:
                    nl += counts[present[b]]
                    sl += sums[present[b]]
        else:
            nl += counts[order[c]]
            sl += sums[order[c]]
        nr = m - nl
        if criterion == 0:
            scores[c] = total - (sl * sl / nl + sl * sl / nr)
        elif nl >= min_leaf and nr >= min_leaf:
            scores[c] = -abs(sl) / np.sqrt(v * nl * nr / (m - 1))
        else:
            scores[c] = np.inf
    best = _first_min(scores, n_cand, tie_rtol)
    if best < 0:
        return np.inf, left
    left_n = 0.0
    if exhaustive:
        mask = best + 1
        for b in range(k - 1):
            if (mask >> b) & 1:
                left[present[b]] = True
                left_n += counts[present[b]]
    else:
        for b in range(best + 1):
            left[order[b]] = True
            left_n += counts[order[b]]
    if left_n >= m - left_n:
        for lev in range(n_lev):
            if counts[lev] == 0:
                left[lev] = True
    return scores[best], left


@njit(cache=True)
def _continuous_scan(x, yc, tie_rtol, criterion, min_leaf, v):
    """Best midpoint threshold for one continuous column; same criteria as above."""
    m = x.size
    order = np.argsort(x, kind="mergesort")
    total = 0.0
    for i in range(m):
        total += yc[i] * yc[i]
    scores = np.full(m - 1, np.inf)
    cs = 0.0
    for i in range(m - 1):
        cs += yc[order[i]]
        if x[order[i + 1]] > x[order[i]]:
            nl = i + 1.0
            nr = m - nl
            if criterion == 0:
                scores[i] = total - (cs * cs / nl + cs * cs / nr)
            elif nl >= min_leaf and nr >= min_leaf:
                scores[i] = -abs(cs) / np.sqrt(v * nl * nr / (m - 1))
    best = _first_min(scores, m - 1, tie_rtol)
    if best < 0:
        return np.inf, np.nan
    return scores[best], 0.5 * (x[order[best]] + x[order[best + 1]])


@njit(cache=True)
def split_node(Xc, y, is_cat, n_levels, max_exhaustive, tie_rtol, criterion, min_leaf):
    """Per-column best rule for a node.

    Returns (scores, thresholds, left tables).  Lower scores are better; for
    the standardised-sum criterion the score is the negated statistic.
    """
    m, k = Xc.shape
    ybar = 0.0
    for i in range(m):
        ybar += y[i]
    ybar /= m
    yc = y - ybar
    v = 0.0
    for i in range(m):
        v += yc[i] * yc[i]
    v /= m
    max_lev = 1
    for j in range(k):
        if is_cat[j] and n_levels[j] > max_lev:
            max_lev = n_levels[j]
    scores = np.full(k, np.inf)
    thresholds = np.full(k, np.nan)
    tables = np.zeros((k, max_lev), dtype=np.bool_)
    for j in range(k):
        x = np.ascontiguousarray(Xc[:, j])
        if is_cat[j]:
            s, left = _categorical_scan(x, yc, n_levels[j], max_exhaustive, tie_rtol, criterion, min_leaf, v)
            scores[j] = s
            tables[j, : n_levels[j]] = left
        else:
            s, t = _continuous_scan(x, yc, tie_rtol, criterion, min_leaf, v)
            scores[j] = s
            thresholds[j] = t
    return scores, thresholds, tables


@njit(cache=True)
def permutation_test(Xc, y, is_cat, n_levels, n_permutations, seed, sd_floor, stat_rtol):
    """Max-|z| statistic and Monte-Carlo p-value per column.

    Each component of sum_i g(x_i) y_i is standardised by its exact
    permutation mean and variance; with centred y and centred g the mean is
    zero.  All columns share the same permutations.  Returns (statistics,
    p-values, valid) where invalid columns have no nondegenerate component.
    """
    m, k = Xc.shape
    ybar = 0.0
    for i in range(m):
        ybar += y[i]
    ybar /= m
    yc = y - ybar
    v = 0.0
    for i in range(m):
        v += yc[i] * yc[i]
    v /= m
    scale = v * m / (m - 1.0)

    max_lev = 1
    for j in range(k):
        if is_cat[j] and n_levels[j] > max_lev:
            max_lev = n_levels[j]
    # continuous columns centred; categorical columns as integer codes
    G = np.zeros((m, k))
    codes = np.zeros((m, k), dtype=np.int64)
    inv_sd = np.zeros((k, max_lev))     # 0 marks a skipped component
    valid = np.zeros(k, dtype=np.bool_)
    for j in range(k):
        if is_cat[j]:
            cnt = np.zeros(n_levels[j])
            for i in range(m):
                c = int(Xc[i, j])
                codes[i, j] = c
                cnt[c] += 1.0
            for lev in range(n_levels[j]):
                sd = np.sqrt(scale * cnt[lev] * (m - cnt[lev]) / m)
                if sd > sd_floor:
                    inv_sd[j, lev] = 1.0 / sd
                    valid[j] = True
        else:
            xbar = 0.0
            for i in range(m):
                xbar += Xc[i, j]
            xbar /= m
            ss = 0.0
            for i in range(m):
                d = Xc[i, j] - xbar
                G[i, j] = d
                ss += d * d
            sd = np.sqrt(scale * ss)
            if sd > sd_floor:
                inv_sd[j, 0] = 1.0 / sd
                valid[j] = True

    stat = np.zeros(k)
    sums = np.zeros((k, max_lev))

    def _stats(yy, out):
        for j in range(k):
            if not valid[j]:
                continue
            if is_cat[j]:
                for lev in range(n_levels[j]):
                    sums[j, lev] = 0.0
                for i in range(m):
                    sums[j, codes[i, j]] += yy[i]
                best = 0.0
                for lev in range(n_levels[j]):
                    z = abs(sums[j, lev]) * inv_sd[j, lev]
                    if z > best:
                        best = z
                out[j] = best
            else:
                t = 0.0
                for i in range(m):
                    t += G[i, j] * yy[i]
                out[j] = abs(t) * inv_sd[j, 0]

    _stats(yc, stat)
    cut = np.empty(k)
    for j in range(k):
        cut[j] = stat[j] - stat_rtol * max(stat[j], 1.0)
    exceed = np.zeros(k)
    ys = yc.copy()
    null = np.zeros(k)
    state = np.uint64(seed)
    for _ in range(n_permutations):
        for i in range(m - 1, 0, -1):
            state, r = _splitmix(state)
            jj = np.int64(((r >> _S32) * np.uint64(i + 1)) >> _S32)
            tmp = ys[i]
            ys[i] = ys[jj]
            ys[jj] = tmp
        _stats(ys, null)
        for j in range(k):
            if valid[j] and null[j] >= cut[j]:
                exceed[j] += 1.0
    pvals = (1.0 + exceed) / (1.0 + n_permutations)
    return stat, pvals, valid
