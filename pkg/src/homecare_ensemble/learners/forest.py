"""Random forest of Gini CART trees on bootstrap resamples."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

N_TREES_GRID = tuple(range(100, 1001, 100))
FEATURE_FRACTION_GRID = tuple(round(0.10 + 0.05 * i, 2) for i in range(17))
MIN_SAMPLES_GRID = tuple(2 ** i for i in range(7))

# relative slack when comparing impurities; distinct split scores on
# integer counts differ by far more than this
_TIE = 1e-12


def gini(counts) -> float:
    """Gini impurity ``1 - p_pos^2 - p_neg^2`` of ``(n_neg, n_pos)``."""
    n_neg, n_pos = counts
    n = n_neg + n_pos
    if n <= 0:
        raise ValueError("gini of an empty node")
    p, q = n_pos / n, n_neg / n
    return 1.0 - p * p - q * q


@dataclass(frozen=True)
class Leaf:
    positive_fraction: float
    n_samples: int


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; node 0 is the root and ``feature == -1`` marks a leaf.
    Samples with ``x[feature] <= threshold`` go left."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def root(self) -> TreeNode:
        def build(i):
            if self.feature[i] < 0:
                return Leaf(float(self.value[i]), int(self.n_samples[i]))
            return Split(int(self.feature[i]), float(self.threshold[i]),
                         build(self.left[i]), build(self.right[i]))
        return build(0)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            value=np.asarray(data["value"], dtype=np.float64),
            n_samples=np.asarray(data["n_samples"], dtype=np.int64),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tree):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("feature", "threshold", "left", "right", "value", "n_samples"))


def best_split(X: np.ndarray, pos: np.ndarray, features, min_samples: int):
    """Best (feature, threshold, weighted_gini) over ``features`` or ``None``.

    ``pos`` is a boolean positive-class mask.  Candidate thresholds are
    midpoints between consecutive distinct values; both children must hold at
    least ``min_samples`` samples.  Ties go to the lower feature index, then the
    smaller threshold.
    """
    n = len(pos)
    lo = max(min_samples, 1)
    if n < 2 * lo:
        return None
    features = np.sort(np.asarray(features, dtype=np.int64))
    cols = X[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    sv = np.take_along_axis(cols, order, axis=0)
    cum_pos = np.cumsum(pos[order], axis=0, dtype=np.float64)[:-1]
    # candidate cut after sorted position k (k+1 samples go left)
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    pl = cum_pos
    pr = float(pos.sum()) - pl
    cand = sv[:-1] < sv[1:]
    cand &= ((nl >= lo) & (nr >= lo))
    # sum over children of n_c * gini_c
    with np.errstate(invalid="ignore", divide="ignore"):
        impurity = (nl - (pl * pl + (nl - pl) ** 2) / nl) + (nr - (pr * pr + (nr - pr) ** 2) / nr)
    impurity = np.where(cand, impurity, np.inf)
    mins = impurity.min(axis=0)
    best = None
    for f in np.flatnonzero(np.isfinite(mins)):
        i = int(np.argmax(impurity[:, f] <= mins[f] + _TIE * n))
        score = float(impurity[i, f]) / n
        if best is None or score < best[2] - _TIE:
            j = int(features[f])
            a, b = sv[i, f], sv[i + 1, f]
            thr = (a + b) / 2.0
            if not (np.isfinite(thr) and a <= thr < b):
                thr = a + (b - a) / 2.0
                if not a <= thr < b:
                    thr = a
            best = (int(j), float(thr), score)
    return best


def build_tree(X: np.ndarray, pos: np.ndarray, feature_fraction: float, min_samples: int,
               rng: np.random.Generator) -> Tree:
    n, d = X.shape
    m = max(1, math.ceil(feature_fraction * d - 1e-9))
    feature, threshold, left, right, value, n_samples = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(pos[idx].mean()))
        n_samples.append(len(idx))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n))]
    while stack:
        node, idx = stack.pop()
        n_pos = int(pos[idx].sum())
        size = len(idx)
        if size < min_samples or n_pos == 0 or n_pos == size:
            continue
        feats = np.sort(rng.choice(d, size=m, replace=False)) if m < d else np.arange(d)
        split = best_split(X[idx], pos[idx], feats, min_samples)
        if split is None or split[2] >= gini((size - n_pos, n_pos)) - _TIE:
            continue
        j, thr, _ = split
        go_left = X[idx, j] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.asarray(feature, dtype=np.int64), np.asarray(threshold),
                np.asarray(left, dtype=np.int64), np.asarray(right, dtype=np.int64),
                np.asarray(value), np.asarray(n_samples, dtype=np.int64))


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), tree_index]))


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    n_trees: int
    feature_fraction: float
    min_samples: int
    seed: int
    dim: int

    kind = "forest"

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[1]}")
        total = np.zeros(len(X))
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_trees": self.n_trees,
            "feature_fraction": self.feature_fraction,
            "min_samples": self.min_samples,
            "seed": self.seed,
            "dim": self.dim,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestModel":
        return cls(
            trees=tuple(Tree.from_dict(t) for t in data["trees"]),
            n_trees=int(data["n_trees"]),
            feature_fraction=float(data["feature_fraction"]),
            min_samples=int(data["min_samples"]),
            seed=int(data["seed"]),
            dim=int(data["dim"]),
        )


def train_forest(X, y, n_trees: int = 100, feature_fraction: float = 0.5,
                 min_samples: int = 1, seed: int = 0, bootstrap: bool = True) -> ForestModel:
    """Each tree sees ``n`` bootstrap draws and, at every split, a fresh subset of
    ``ceil(feature_fraction * d)`` features.  Tree ``k`` draws from its own
    stream seeded by ``(seed, k)``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("empty training data")
    if len(X) != len(y):
        raise ValueError(f"dimension mismatch: {len(X)} rows, {len(y)} labels")
    if len(X) < 2:
        raise ValueError("need at least 2 training examples")
    if not 0 < feature_fraction <= 1:
        raise ValueError("feature_fraction must be in (0, 1]")
    if not 1 <= min_samples <= len(X):
        raise ValueError("min_samples must be in [1, n]")
    if n_trees < 1:
        raise ValueError("n_trees must be positive")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    pos = y == 1
    n = len(X)
    trees = []
    for k in range(n_trees):
        rng = tree_rng(seed, k)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(build_tree(X[idx], pos[idx], feature_fraction, min_samples, rng))
    return ForestModel(tuple(trees), n_trees, float(feature_fraction), int(min_samples),
                       int(seed), X.shape[1])


def predict_forest(model: ForestModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"expected vector of length {model.dim}, got shape {x.shape}")
    return float(model.predict_proba(x[None, :])[0])
