"""Single regression tree grown on pseudo-values.

Nodes are stored in flat arrays (node 0 is the root).  A leaf has
``feature == -1``; its prediction is the mean pseudo-value of its members.
"""

from __future__ import annotations

import numpy as np

from .splits import cart_best_split, cond_best_split, cond_select_variable


class Tree:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.n_node = []
        self.go_left = {}          # node -> bool array over all levels of a categorical feature
        self.p_value = {}          # node -> selection p-value (conditional trees)
        self.members = None        # node -> training row indices, when kept

    def _add(self, value, n):
        self.feature.append(-1)
        self.threshold.append(float("nan"))
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.n_node.append(int(n))
        return len(self.value) - 1

    def _finalise(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=float)
        self.n_node = np.asarray(self.n_node, dtype=np.int64)
        return self

    @property
    def n_nodes(self) -> int:
        return self.value.size

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                d[self.left[node]] = d[self.right[node]] = d[node] + 1
        return int(d.max())

    def used_features(self) -> set:
        return set(self.feature[self.feature >= 0].tolist())

    def apply(self, X) -> np.ndarray:
        """Leaf index for each row."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            f = self.feature[nd]
            x = X[active, f]
            left = x <= self.threshold[nd]
            for k in np.unique(nd[np.isnan(self.threshold[nd])]):
                sel = nd == k
                codes = x[sel].astype(np.int64)
                table = self.go_left[int(k)]
                inside = (codes >= 0) & (codes < table.size)
                left[sel] = np.where(inside, table[np.clip(codes, 0, table.size - 1)], False)
            node[active] = np.where(left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n": self.n_node.tolist(),
            "go_left": {str(k): v.astype(int).tolist() for k, v in self.go_left.items()},
        }

    @classmethod
    def from_json(cls, d):
        t = cls()
        t.feature = d["feature"]
        t.threshold = [float("nan") if v is None else v for v in d["threshold"]]
        t.left, t.right, t.value, t.n_node = d["left"], d["right"], d["value"], d["n"]
        t.go_left = {int(k): np.asarray(v, dtype=bool) for k, v in d["go_left"].items()}
        return t._finalise()


def fit_tree(X, y, is_cat, n_levels, algorithm, mtry, rng, *, min_split=None, min_leaf=7,
             n_permutations=1000, keep_members=False) -> Tree:
    """Grow a tree without depth limit.

    Nodes are visited depth-first, left daughter first; every random draw
    (candidate variables, permutations) comes from ``rng`` in that order.
    A node is split only if it has at least ``min_split`` members.  CART
    splits must strictly lower the node's squared error; conditional splits
    must leave ``min_leaf`` members on each side.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    is_cat = np.asarray(is_cat, dtype=bool)
    n_levels = np.asarray(n_levels, dtype=np.int64)
    if algorithm not in ("cart", "conditional"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if min_split is None:
        min_split = 5 if algorithm == "cart" else 20
    p = X.shape[1]
    mtry = max(1, min(int(mtry), p))

    tree = Tree()
    members = {} if keep_members else None
    root = np.arange(y.size)
    tree._add(y.mean() if y.size else 0.0, y.size)
    stack = [(0, root)]
    while stack:
        node, idx = stack.pop()
        if keep_members:
            members[node] = idx
        m = idx.size
        if m < min_split or m < 2:
            continue
        yn = y[idx]
        if np.ptp(yn) == 0:
            continue
        cand = np.sort(rng.choice(p, size=mtry, replace=False))
        Xn = X[idx]
        if algorithm == "cart":
            split = cart_best_split(Xn, yn, cand, is_cat, n_levels)
            if split is not None:
                parent_ss = float(((yn - yn.mean()) ** 2).sum())
                if not split.score < parent_ss * (1 - 1e-12):
                    split = None
        else:
            sel = cond_select_variable(Xn, yn, cand, is_cat, n_levels, n_permutations, rng)
            split = None
            if sel is not None:
                split = cond_best_split(Xn, yn, sel[0], is_cat, n_levels, min_leaf)
                if split is not None:
                    tree.p_value[node] = sel[1]
        if split is None:
            continue
        left_mask = split.goes_left(Xn[:, split.variable])
        li, ri = idx[left_mask], idx[~left_mask]
        tree.feature[node] = split.variable
        if split.is_categorical:
            table = np.zeros(int(n_levels[split.variable]), dtype=bool)
            table[list(split.left_levels)] = True
            tree.go_left[node] = table
        else:
            tree.threshold[node] = split.threshold
        lnode = tree._add(y[li].mean(), li.size)
        rnode = tree._add(y[ri].mean(), ri.size)
        tree.left[node], tree.right[node] = lnode, rnode
        stack.append((rnode, ri))
        stack.append((lnode, li))
    tree.members = members
    return tree._finalise()
