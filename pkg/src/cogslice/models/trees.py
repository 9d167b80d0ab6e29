"""Squared-error regression trees, random forests and gradient boosting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import best_split
from .config import TrainConfig

LEAF = -1
# below this fraction of the training rows a node re-sorts its own rows
# instead of filtering the presorted global order
_PRESORT_FRACTION = 0.125


@dataclass(frozen=True)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max(initial=0))

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> DecisionTree:
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
            int(d["n_features"]),
        )


def _leaf_value(y: np.ndarray) -> float:
    if y[0] == y[-1] and np.all(y == y[0]):
        return float(y[0])
    return float(y.mean())


def presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_depth: int | None = None,
    min_leaf: int = 1,
    mtry: int | None = None,
    rng: np.random.Generator | None = None,
    order: np.ndarray | None = None,
) -> DecisionTree:
    """Grow a squared-error tree depth-first.

    A node splits whenever its targets are not all equal and a valid cut
    exists; with ``mtry`` < p a fresh random feature subset is drawn per node.
    ``order`` may carry a precomputed per-feature argsort of X (p x n).
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    mtry = p if mtry is None else max(1, min(mtry, p))
    if mtry < p and rng is None:
        raise ValueError("feature subsampling needs an rng")
    if order is None:
        order = presort(X)
    in_node = np.zeros(n, dtype=bool)
    XT = np.ascontiguousarray(X.T)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(_leaf_value(y[rows]) if len(rows) else 0.0)
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        k = len(rows)
        if k < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        yr = y[rows]
        if np.all(yr == yr[0]):
            continue
        feats = np.arange(p) if mtry == p else np.sort(rng.choice(p, mtry, replace=False))
        presorted = k >= _PRESORT_FRACTION * n
        if presorted:
            in_node[:] = False
            in_node[rows] = True
        f, lo, hi, _ = best_split(XT, y, order, rows, in_node, feats, min_leaf, presorted)
        if f < 0:
            continue
        thr = lo + (hi - lo) / 2.0
        if not lo <= thr < hi:
            thr = lo
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        li, ri = new_node(lrows), new_node(rrows)
        feature[node], threshold[node], left[node], right[node] = f, float(thr), li, ri
        stack.append((ri, rrows, depth + 1))
        stack.append((li, lrows, depth + 1))
    return DecisionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
        p,
    )


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    seeds: tuple[int, ...]
    mtry: int
    min_leaf: int
    bootstrap: bool = True

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return total / len(self.trees)


def _fit_forest_tree(X, y, seed, mtry, min_leaf, max_depth, bootstrap):
    rng = np.random.default_rng(seed)
    n = len(y)
    rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
    return build_tree(X[rows], y[rows], max_depth=max_depth, min_leaf=min_leaf, mtry=mtry, rng=rng)


def _tree_seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in ss.spawn(count)]


def train_random_forest(X, y, cfg: TrainConfig | None = None) -> ForestModel:
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    p = X.shape[1]
    mtry = cfg.forest_mtry or max(1, math.ceil(p / 3))
    seeds = _tree_seeds(cfg.seed, cfg.forest_trees)
    args = (mtry, cfg.forest_min_leaf, cfg.forest_max_depth, cfg.forest_bootstrap)
    if cfg.n_jobs != 1:
        from joblib import Parallel, delayed

        trees = Parallel(n_jobs=cfg.n_jobs)(delayed(_fit_forest_tree)(X, y, s, *args) for s in seeds)
    else:
        trees = [_fit_forest_tree(X, y, s, *args) for s in seeds]
    return ForestModel(tuple(trees), tuple(seeds), mtry, cfg.forest_min_leaf, cfg.forest_bootstrap)


@dataclass(frozen=True)
class GbtModel:
    base_prediction: float
    trees: tuple[DecisionTree, ...]
    learning_rate: float
    max_depth: int | None
    n_features: int
    train_rmse: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def staged_predict(self, X):
        X = np.asarray(X, dtype=float)
        F = np.full(X.shape[0], self.base_prediction)
        yield F.copy()
        for t in self.trees:
            F = F + self.learning_rate * t.predict(X)
            yield F.copy()

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        F = np.full(X.shape[0], self.base_prediction)
        for t in self.trees:
            F = F + self.learning_rate * t.predict(X)
        return F


def train_gbt(X, y, cfg: TrainConfig | None = None) -> GbtModel:
    """First-order boosting with squared loss: each stage fits the residuals."""
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    base = float(y.mean())
    F = np.full(len(y), base)
    rmse = [float(np.sqrt(np.mean((y - F) ** 2)))]
    trees = []
    order = presort(X)
    for _ in range(cfg.gbt_trees):
        tree = build_tree(X, y - F, max_depth=cfg.gbt_max_depth, min_leaf=cfg.gbt_min_leaf, order=order)
        F = F + cfg.gbt_learning_rate * tree.predict(X)
        trees.append(tree)
        rmse.append(float(np.sqrt(np.mean((y - F) ** 2))))
    return GbtModel(base, tuple(trees), cfg.gbt_learning_rate, cfg.gbt_max_depth, X.shape[1], tuple(rmse))
