"""Stratified folds, hyperparameter grids and cross-validated grid search."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np

from ..learners import (
    FEATURE_FRACTION_GRID, MIN_SAMPLES_GRID, N_TREES_GRID, fit_lambda_path, lambda_grid,
    train_forest, train_logreg,
)
from .metrics import auc

FAMILIES = ("LR", "RF")


@dataclass(frozen=True)
class LRParams:
    lam: float


@dataclass(frozen=True)
class RFParams:
    n_trees: int
    feature_fraction: float
    min_samples: int


HyperParams = Union[LRParams, RFParams]


def params_to_dict(params: HyperParams) -> dict:
    return asdict(params)


def default_lr_grid() -> list[LRParams]:
    return [LRParams(float(l)) for l in lambda_grid()]


def default_rf_grid() -> list[RFParams]:
    return rf_grid(N_TREES_GRID, FEATURE_FRACTION_GRID, MIN_SAMPLES_GRID)


def rf_grid(n_trees: Sequence[int], feature_fraction: Sequence[float],
            min_samples: Sequence[int]) -> list[RFParams]:
    return [RFParams(int(t), float(f), int(m))
            for t, f, m in itertools.product(n_trees, feature_fraction, min_samples)]


def default_grid(family: str) -> list:
    return default_lr_grid() if family == "LR" else default_rf_grid()


class StratificationError(ValueError):
    pass


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_index: np.ndarray

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, validation indices) for fold ``i``."""
        val = self.fold_index == i
        return np.flatnonzero(~val), np.flatnonzero(val)


def stratified_folds(labels, k: int = 3, seed: int = 0) -> FoldAssignment:
    """Shuffle each class with ``seed`` and deal its members round-robin over
    the folds; the dealing continues across classes so fold sizes stay
    balanced too."""
    labels = np.asarray(labels).ravel()
    if k < 2:
        raise StratificationError("k must be at least 2")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), k]))
    fold = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in (1, -1):
        members = np.flatnonzero(labels == 1) if cls == 1 else np.flatnonzero(labels != 1)
        if len(members) < k:
            raise StratificationError(
                f"class {cls:+d} has {len(members)} members, fewer than k={k}")
        members = rng.permutation(members)
        fold[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return FoldAssignment(k, fold)


@dataclass
class GridResult:
    best_params: HyperParams
    model: object
    scores: dict


def _selection_key(params: HyperParams):
    # larger value = preferred on equal AUC (stronger regularisation)
    if isinstance(params, LRParams):
        return (params.lam,)
    return (params.min_samples, -params.n_trees, -params.feature_fraction)


def fit_params(params: HyperParams, X, y, seed: int = 0, lr_options: dict | None = None):
    if isinstance(params, LRParams):
        return train_logreg(X, y, params.lam, **(lr_options or {}))
    return train_forest(X, y, params.n_trees, params.feature_fraction,
                        params.min_samples, seed=seed)


def cross_validate(X, y, grid: Sequence[HyperParams], k: int = 3, seed: int = 0,
                   lr_options: dict | None = None) -> dict:
    """Mean validation AUC per grid point."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    folds = stratified_folds(y, k, seed)
    lr_points = [p for p in grid if isinstance(p, LRParams)]
    rf_points = [p for p in grid if isinstance(p, RFParams)]
    totals = {p: 0.0 for p in grid}
    for i in range(k):
        tr, va = folds.split(i)
        if lr_points:
            models = fit_lambda_path(X[tr], y[tr], [p.lam for p in lr_points],
                                     **(lr_options or {}))
            for p, m in zip(lr_points, models):
                totals[p] += auc(m.predict_proba(X[va]), y[va])
        for p in rf_points:
            m = fit_params(p, X[tr], y[tr], seed=seed)
            totals[p] += auc(m.predict_proba(X[va]), y[va])
    return {p: totals[p] / k for p in grid}


def select_best(scores: dict) -> HyperParams:
    best_auc = max(scores.values())
    tied = [p for p, s in scores.items() if s >= best_auc - 1e-12]
    return max(tied, key=_selection_key)


def grid_search(X, y, family: str, grid: Sequence[HyperParams] | None = None, k: int = 3,
                seed: int = 0, lr_options: dict | None = None) -> GridResult:
    """Select by mean ``k``-fold stratified validation AUC, then refit on all of
    ``X``.  A singleton grid skips cross-validation."""
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}")
    grid = list(default_grid(family) if grid is None else grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    expected = LRParams if family == "LR" else RFParams
    if not all(isinstance(p, expected) for p in grid):
        raise ValueError(f"grid points must be {expected.__name__} for family {family}")
    if len(grid) == 1:
        scores = {grid[0]: float("nan")}
        best = grid[0]
    else:
        scores = cross_validate(X, y, grid, k, seed, lr_options)
        best = select_best(scores)
    model = fit_params(best, X, y, seed=seed, lr_options=lr_options)
    return GridResult(best, model, scores)
