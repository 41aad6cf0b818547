"""Split search for regression trees on pseudo-values.

Two families:

* CART: variable and rule chosen jointly by minimising the summed squared
  error of the two daughter nodes.
* Conditional inference: the variable is chosen first by permutation tests
  on a standardised linear statistic, then the rule maximising the
  standardised left-node sum of that variable alone.

Node data arrive as a float matrix of covariate codes; ``is_cat`` and
``n_levels`` describe the columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import permutation_test, split_node

MAX_EXHAUSTIVE_LEVELS = 12
SD_FLOOR = 1e-12
# relative slack for "permuted statistic >= observed" under rounding
STAT_RTOL = 1e-10
# scores this close count as tied
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Split:
    variable: int
    threshold: float | None = None          # continuous: x <= threshold goes left
    left_levels: frozenset | None = None    # categorical: level codes going left
    score: float = float("nan")

    @property
    def is_categorical(self) -> bool:
        return self.left_levels is not None

    def goes_left(self, x) -> np.ndarray:
        x = np.asarray(x)
        if self.left_levels is None:
            return x <= self.threshold
        return np.isin(x.astype(np.int64), list(self.left_levels))


def cart_split_score(values, left) -> float:
    """Sum of squared deviations from the daughter-node means."""
    values = np.asarray(values, dtype=float)
    left = np.asarray(left, dtype=bool)
    if left.shape != values.shape:
        raise ValueError("partition mask must match values")
    if left.all() or not left.any():
        raise ValueError("both daughter nodes must be nonempty")
    a, b = values[left], values[~left]
    return float(((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum())


def _node_block(X, candidates, is_cat, n_levels):
    cand = np.asarray(sorted(int(j) for j in candidates), dtype=np.int64)
    Xc = np.ascontiguousarray(np.asarray(X, dtype=float)[:, cand])
    return (cand, Xc, np.ascontiguousarray(np.asarray(is_cat, dtype=bool)[cand]),
            np.ascontiguousarray(np.asarray(n_levels, dtype=np.int64)[cand]))


def _as_split(variable, is_cat, score, threshold, table):
    if is_cat:
        return Split(variable, left_levels=frozenset(np.flatnonzero(table).tolist()), score=score)
    return Split(variable, threshold=float(threshold), score=score)


# ---------------------------------------------------------------- CART


def cart_best_split(X, y, candidates, is_cat, n_levels) -> Split | None:
    """Exhaustive CART search over ``candidates``.

    Continuous columns are cut at midpoints between sorted distinct values;
    categorical columns try every level subset (or, above
    MAX_EXHAUSTIVE_LEVELS levels, the mean-ordered prefixes).  Ties go to
    the lowest variable index, then the lowest threshold (for categorical
    variables, the first subset in enumeration order).  Levels absent from
    the node follow the larger daughter.
    """
    y = np.ascontiguousarray(y, dtype=float)
    cand, Xc, cat, lev = _node_block(X, candidates, is_cat, n_levels)
    if y.size < 2 or cand.size == 0:
        return None
    scores, thr, tables = split_node(Xc, y, cat, lev, MAX_EXHAUSTIVE_LEVELS, TIE_RTOL, 0, 0)
    best = None
    for c in range(cand.size):
        s = scores[c]
        if np.isfinite(s) and (best is None or s < scores[best] - TIE_RTOL * max(abs(scores[best]), 1.0)):
            best = c
    if best is None:
        return None
    return _as_split(int(cand[best]), cat[best], float(scores[best]), thr[best], tables[best, : lev[best]])


# ---------------------------------------------------------------- conditional inference


def cond_test_statistics(X, y, candidates, is_cat, n_levels, n_permutations, rng):
    """Observed max-|z| statistic and permutation p-value per candidate.

    Continuous columns enter through the identity, categorical ones through
    level indicators; every component is standardised by its exact
    permutation mean and SD.  The p-value is (1 + #exceedances) /
    (1 + n_permutations).  Returns a dict ``variable -> (statistic, p)``;
    candidates without a non-degenerate component are absent.
    """
    y = np.ascontiguousarray(y, dtype=float)
    if y.size < 2:
        return {}
    cand, Xc, cat, lev = _node_block(X, candidates, is_cat, n_levels)
    seed = int(rng.integers(0, 2**63, dtype=np.int64))
    stat, pvals, valid = permutation_test(Xc, y, cat, lev, int(n_permutations), np.uint64(seed),
                                          SD_FLOOR, STAT_RTOL)
    return {int(j): (float(s), float(p)) for j, s, p, ok in zip(cand, stat, pvals, valid) if ok}


def cond_select_variable(X, y, candidates, is_cat, n_levels, n_permutations, rng):
    """Candidate with the smallest permutation p-value.

    Ties: larger observed statistic, then lower variable index.  Returns
    ``(variable, p_value)`` or None when every candidate is constant.
    """
    stats = cond_test_statistics(X, y, candidates, is_cat, n_levels, n_permutations, rng)
    if not stats:
        return None
    j = min(stats, key=lambda v: (stats[v][1], -stats[v][0], v))
    return j, stats[j][1]


def cond_best_split(X, y, variable, is_cat, n_levels, min_leaf) -> Split | None:
    """Rule for ``variable`` maximising the standardised left-node sum.

    The left sum of centred pseudo-values has permutation mean zero and
    variance V * n_L * (m - n_L) / (m - 1), V the node variance.  Only
    rules leaving at least ``min_leaf`` observations on each side are
    admissible; None when there is none.  Ties go to the lowest threshold.
    """
    y = np.ascontiguousarray(y, dtype=float)
    if y.size < 2 or np.ptp(y) == 0:
        return None
    cand, Xc, cat, lev = _node_block(X, [variable], is_cat, n_levels)
    scores, thr, tables = split_node(Xc, y, cat, lev, MAX_EXHAUSTIVE_LEVELS, TIE_RTOL, 1, int(min_leaf))
    if not np.isfinite(scores[0]):
        return None
    return _as_split(int(variable), cat[0], float(-scores[0]), thr[0], tables[0, : lev[0]])
