"""CART trees (Gini impurity) and a bagged random forest with majority vote."""

from __future__ import annotations

import numpy as np

from .base import Classifier


def _best_split(X, y, features, min_leaf):
    """Best (gain, feature, threshold) over ``features``; gain is the Gini decrease."""
    n = y.size
    pos = y.sum()
    parent = 1.0 - (pos / n) ** 2 - (1 - pos / n) ** 2
    best = (0.0, -1, 0.0)
    for f in features:
        col = X[:, f]
        order = np.argsort(col, kind="mergesort")
        xs, ys = col[order], y[order]
        left_n = np.arange(1, n)
        left_pos = np.cumsum(ys)[:-1]
        valid = xs[1:] != xs[:-1]
        valid &= (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not valid.any():
            continue
        ln, lp = left_n[valid], left_pos[valid]
        rn, rp = n - ln, pos - lp
        gl = 1.0 - (lp / ln) ** 2 - (1 - lp / ln) ** 2
        gr = 1.0 - (rp / rn) ** 2 - (1 - rp / rn) ** 2
        gain = parent - (ln * gl + rn * gr) / n
        k = int(np.argmax(gain))
        if gain[k] > best[0] + 1e-12:
            idx = np.flatnonzero(valid)[k]
            best = (float(gain[k]), int(f), float((xs[idx] + xs[idx + 1]) / 2))
    return best


class DecisionTree(Classifier):
    name = "cart"

    def __init__(self, max_depth=None, min_samples_leaf=1, max_features=None, rng=None):
        self.max_depth, self.min_samples_leaf = max_depth, min_samples_leaf
        self.max_features = max_features
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def _fit(self, X, y):
        # parallel arrays: feature (-1 marks a leaf), threshold, left, right, value
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        d = X.shape[1]
        k = d if self.max_features is None else max(1, min(d, self.max_features))
        stack = [(np.arange(y.size), 0, self._new_node())]
        while stack:
            idx, depth, node = stack.pop()
            yy = y[idx]
            self.value[node] = float(yy.mean())
            if (yy.min() == yy.max() or idx.size < 2 * self.min_samples_leaf
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            feats = self.rng.choice(d, size=k, replace=False) if k < d else np.arange(d)
            gain, f, thr = _best_split(X[idx], yy, feats, self.min_samples_leaf)
            if f < 0:
                continue
            mask = X[idx, f] <= thr
            l, r = self._new_node(), self._new_node()
            self.feature[node], self.threshold[node] = f, thr
            self.left[node], self.right[node] = l, r
            stack.append((idx[~mask], depth + 1, r))
            stack.append((idx[mask], depth + 1, l))
        for attr in ("feature", "left", "right"):
            setattr(self, attr, np.array(getattr(self, attr), dtype=np.int64))
        self.threshold = np.array(self.threshold)
        self.value = np.array(self.value)

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            a = np.flatnonzero(active)
            nd = node[a]
            go_left = X[a, self.feature[nd]] <= self.threshold[nd]
            node[a] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def _proba(self, X):
        return self.value[self.apply(X)]


class RandomForest(Classifier):
    """Bootstrap-aggregated CART trees, sqrt(d) candidate features per split.

    The score is the fraction of trees voting malicious.
    """

    name = "random_forest"

    def __init__(self, n_trees=100, max_depth=None, min_samples_leaf=1,
                 max_features="sqrt", seed=0):
        self.n_trees, self.max_depth = n_trees, max_depth
        self.min_samples_leaf, self.max_features, self.seed = min_samples_leaf, max_features, seed

    def _fit(self, X, y):
        n, d = X.shape
        k = max(1, int(np.sqrt(d))) if self.max_features == "sqrt" else self.max_features
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            boot = rng.integers(0, n, size=n)
            if np.unique(y[boot]).size < 2:
                boot = np.r_[boot, np.flatnonzero(y == 0)[:1], np.flatnonzero(y == 1)[:1]]
            tree = DecisionTree(self.max_depth, self.min_samples_leaf, k, rng)
            tree.n_features_ = d
            tree._fit(X[boot], y[boot])
            self.trees.append(tree)

    def _proba(self, X):
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree._proba(X) > 0.5
        return votes / len(self.trees)
