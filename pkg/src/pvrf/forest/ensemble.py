"""Pseudo-value random forests: subsampled tree ensembles and mtry tuning."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..data import ColumnSchema, check_X
from ..errors import DataError
from .tree import Tree, fit_tree

FORMAT = "pvrf-forest"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    subsample_fraction: float = 0.632
    mtry: int | None = None            # None: floor(sqrt(p))
    cart_min_split: int = 5
    cond_min_split: int = 20
    cond_min_leaf: int = 7
    n_permutations: int = 1000
    seed: int = 0

    def validate(self, p=None):
        for name in ("n_trees", "cart_min_split", "cond_min_split", "cond_min_leaf", "n_permutations"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DataError(f"{name} must be a positive integer, got {v}")
        if not 0 < self.subsample_fraction <= 1:
            raise DataError(f"subsample_fraction must lie in (0, 1], got {self.subsample_fraction}")
        if self.mtry is not None and p is not None and not 1 <= self.mtry <= p:
            raise DataError(f"mtry must lie in [1, {p}], got {self.mtry}")
        return self

    def resolved_mtry(self, p) -> int:
        return self.mtry if self.mtry is not None else default_mtry(p)


def default_mtry(p) -> int:
    return max(1, math.isqrt(p))


def tree_seed(master_seed, index) -> int:
    """Per-tree seed derived from (master seed, tree index) only."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ForestModel:
    trees: list
    algorithm: str
    params: ForestParams
    tau: float
    schema: tuple
    seeds: list = field(default_factory=list)
    subsamples: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return predict_rmst(self, X)

    def to_json(self):
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "algorithm": self.algorithm,
            "tau": self.tau,
            "params": asdict(self.params),
            "schema": [c.to_json() for c in self.schema],
            "seeds": [str(s) for s in self.seeds],
            "subsamples": [s.tolist() for s in self.subsamples],
            "trees": [t.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, d):
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise DataError("not a version-1 pvrf forest file")
        return cls(
            trees=[Tree.from_json(t) for t in d["trees"]],
            algorithm=d["algorithm"],
            params=ForestParams(**d["params"]),
            tau=float(d["tau"]),
            schema=tuple(ColumnSchema.from_json(c) for c in d["schema"]),
            seeds=[int(s) for s in d["seeds"]],
            subsamples=[np.asarray(s, dtype=np.int64) for s in d["subsamples"]],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _column_info(schema):
    is_cat = np.array([c.is_categorical for c in schema], dtype=bool)
    n_levels = np.array([c.n_levels for c in schema], dtype=np.int64)
    return is_cat, n_levels


def _grow(args):
    X, y, is_cat, n_levels, algorithm, params, mtry, indices = args
    n = y.size
    size = max(1, int(math.floor(params.subsample_fraction * n)))
    out = []
    for i in indices:
        seed = tree_seed(params.seed, i)
        rng = np.random.default_rng(seed)
        sub = np.sort(rng.choice(n, size=size, replace=False))
        if algorithm == "cart":
            kw = {"min_split": params.cart_min_split}
        else:
            kw = {"min_split": params.cond_min_split, "min_leaf": params.cond_min_leaf,
                  "n_permutations": params.n_permutations}
        tree = fit_tree(X[sub], y[sub], is_cat, n_levels, algorithm, mtry, rng, **kw)
        out.append((seed, sub, tree))
    return out


def fit_forest(dataset, pseudo, params: ForestParams = ForestParams(), algorithm="conditional",
               n_jobs=1) -> ForestModel:
    """Grow ``params.n_trees`` trees, each on its own subsample drawn without replacement.

    Tree i depends only on (data, params, i), so results do not depend on
    ``n_jobs``.
    """
    if algorithm not in ("cart", "conditional"):
        raise DataError(f"unknown algorithm {algorithm!r}")
    X = dataset.X
    y = np.asarray(getattr(pseudo, "values", pseudo), dtype=float)
    if y.shape != (dataset.n,):
        raise DataError("pseudo-values do not match the dataset")
    params.validate(dataset.p)
    is_cat, n_levels = _column_info(dataset.schema)
    mtry = params.resolved_mtry(dataset.p)
    tau = float(getattr(pseudo, "tau", float("nan")))

    idx = list(range(params.n_trees))
    if n_jobs > 1 and params.n_trees > 1:
        chunks = [idx[k::n_jobs] for k in range(n_jobs)]
        with ProcessPoolExecutor(n_jobs) as ex:
            parts = list(ex.map(_grow, [(X, y, is_cat, n_levels, algorithm, params, mtry, c) for c in chunks]))
        grown = {i: r for c, part in zip(chunks, parts) for i, r in zip(c, part)}
        results = [grown[i] for i in idx]
    else:
        results = _grow((X, y, is_cat, n_levels, algorithm, params, mtry, idx))
    params = replace(params, mtry=mtry)
    return ForestModel(
        trees=[r[2] for r in results],
        algorithm=algorithm,
        params=params,
        tau=tau,
        schema=dataset.schema,
        seeds=[r[0] for r in results],
        subsamples=[r[1] for r in results],
    )


def predict_rmst(model: ForestModel, X) -> np.ndarray:
    """Average of the per-tree leaf means."""
    X = check_X(model.schema, X)
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        total += tree.predict(X)
    return total / len(model.trees)


def default_mtry_grid(p) -> list[int]:
    grid = {math.isqrt(p), p // 4, p // 2, p}
    return sorted(m for m in grid if m >= 1)


def cv_folds(n, k, rng, strata=None) -> np.ndarray:
    """Fold label per row; with ``strata`` each stratum is spread evenly over folds."""
    if k < 2:
        raise DataError("need at least two folds")
    if k > n:
        raise DataError(f"cannot make {k} folds from {n} rows")
    folds = np.empty(n, dtype=np.int64)
    if strata is None:
        strata = np.zeros(n, dtype=np.int64)
    offset = 0
    for s in np.unique(strata):
        rows = rng.permutation(np.flatnonzero(strata == s))
        folds[rows] = (np.arange(rows.size) + offset) % k
        offset += rows.size
    return folds


def tune_mtry(dataset, pseudo, params: ForestParams = ForestParams(), grid=None, k=5,
              algorithm="conditional", n_jobs=1) -> int:
    """mtry minimising k-fold CV squared error against held-out pseudo-values.

    Ties go to the smaller mtry.
    """
    grid = default_mtry_grid(dataset.p) if grid is None else sorted(set(int(m) for m in grid))
    if not grid:
        raise DataError("empty mtry grid")
    for m in grid:
        if not 1 <= m <= dataset.p:
            raise DataError(f"mtry {m} outside [1, {dataset.p}]")
    if len(grid) == 1:
        return grid[0]
    y = np.asarray(getattr(pseudo, "values", pseudo), dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(int(params.seed), spawn_key=(2**31 - 1,)))
    folds = cv_folds(dataset.n, k, rng)
    errors = []
    for m in grid:
        sse = 0.0
        for f in range(k):
            train, test = np.flatnonzero(folds != f), np.flatnonzero(folds == f)
            model = fit_forest(dataset.subset(train), y[train], replace(params, mtry=m), algorithm, n_jobs)
            resid = y[test] - predict_rmst(model, dataset.X[test])
            sse += float(resid @ resid)
        errors.append(sse / dataset.n)
    best = min(range(len(grid)), key=lambda i: (errors[i], grid[i]))
    return grid[best]
