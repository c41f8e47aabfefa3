"""Time-indexed pools of level-0 models and the level-1 combiner.

At month ``t`` a level-0 model is trained either on chunk ``t-3`` alone
(``last_month``) or on every chunk up to ``t-3`` (``all_previous``).  Models
never change once pooled; the level-1 model is fit on the pool's scores for
the instances of chunk ``t-3``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._seeding import derive_seed
from .cohort import FeatureSchema, InformationLevel, MonthChunk, format_year_month, project_matrix
from .evaluation.cv import HyperParams, grid_search, fit_params
from .learners import DegenerateLabelsError, ForestModel, LinearModel

VARIANTS = ("last_month", "all_previous")
COMPOSITIONS = {"from_1": ("last_month",), "from_2": ("all_previous",),
                "from_1_and_2": ("last_month", "all_previous")}
TRAINING_LAG = 3


class EmptyTrainingWindowError(ValueError):
    pass


@dataclass(frozen=True)
class TrainedModel:
    """A fitted estimator plus the information level it reads.  ``level`` is
    ``None`` for level-1 models, whose inputs are pool scores."""
    estimator: LinearModel | ForestModel
    family: str
    level: InformationLevel | None
    params: HyperParams | None = None

    def predict(self, features: np.ndarray, schema: FeatureSchema | None = None) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if self.level is not None:
            if schema is None:
                raise ValueError("schema required to project master features")
            features = project_matrix(features, self.level, schema)
        if len(features) == 0:
            return np.zeros(0)
        return self.estimator.predict_proba(features)


@dataclass
class Tuner:
    """Grid search + stratified CV with per-family grids (``None`` = full grid)."""
    lr_grid: Sequence[HyperParams] | None = None
    rf_grid: Sequence[HyperParams] | None = None
    k: int = 3
    seed: int = 0
    lr_options: dict = field(default_factory=dict)

    def grid(self, family: str):
        return self.lr_grid if family == "LR" else self.rf_grid

    def __call__(self, family: str, X, y, key=()) -> tuple[HyperParams, object]:
        seed = derive_seed(self.seed, family, *key)
        result = grid_search(X, y, family, self.grid(family), self.k, seed,
                             lr_options=self.lr_options)
        return result.best_params, result.model

    def refit(self, params: HyperParams, X, y, key=()):
        seed = derive_seed(self.seed, type(params).__name__[:2], *key)
        return fit_params(params, X, y, seed=seed, lr_options=self.lr_options)


@dataclass(frozen=True)
class PoolEntry:
    trained_at: int
    model: TrainedModel
    variant: str


@dataclass
class Level0Pool:
    info_level: InformationLevel
    entries: list[PoolEntry] = field(default_factory=list)

    def add(self, trained_at: int, model: TrainedModel, variant: str) -> None:
        if self.entries and trained_at <= self.entries[-1].trained_at:
            raise ValueError("pool models must be added in strictly increasing month order")
        if model.level != self.info_level:
            raise ValueError(f"model reads {model.level}, pool is {self.info_level}")
        self.entries.append(PoolEntry(trained_at, model, variant))

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class StackedEnsemble:
    pools: tuple[Level0Pool, ...]
    sizes: tuple[int, ...]      # pool sizes frozen at level-1 training time
    level1: TrainedModel
    composition: str

    @property
    def width(self) -> int:
        return sum(self.sizes)


def _as_map(chunks) -> Mapping[int, MonthChunk]:
    return chunks if isinstance(chunks, Mapping) else {c.t: c for c in chunks}


def level0_training_set(chunks, t: int, variant: str) -> tuple[np.ndarray, np.ndarray]:
    """Master features and labels a level-0 model trained at month ``t`` sees."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    cmap = _as_map(chunks)
    newest = t - TRAINING_LAG
    months = [newest] if variant == "last_month" else sorted(m for m in cmap if m <= newest)
    parts = [cmap[m].labeled() for m in months if m in cmap]
    parts = [p for p in parts if len(p)]
    if not parts:
        raise EmptyTrainingWindowError(
            f"empty training window for {variant} model at {format_year_month(t)}")
    X = np.concatenate([p.features for p in parts]) if len(parts) > 1 else parts[0].features
    y = np.concatenate([p.labels for p in parts]) if len(parts) > 1 else parts[0].labels
    return X, y


def train_level0(chunks, t: int, variant: str, model_family: str, level,
                 schema: FeatureSchema, tuner: Tuner, params: HyperParams | None = None
                 ) -> TrainedModel:
    """Tune (or, given ``params``, just refit) a level-0 model for month ``t``."""
    level = InformationLevel(level)
    X, y = level0_training_set(chunks, t, variant)
    if not ((y == 1).any() and (y == -1).any()):
        raise DegenerateLabelsError(
            f"degenerate labels in {variant} training set at {format_year_month(t)}")
    Xl = project_matrix(X, level, schema)
    key = ("level0", variant, level.value, t)
    if params is None:
        params, est = tuner(model_family, Xl, y, key)
    else:
        est = tuner.refit(params, Xl, y, key)
    return TrainedModel(est, model_family, level, params)


def build_meta_features(pools, features: np.ndarray, schema: FeatureSchema,
                        sizes: Sequence[int] | None = None, cache: dict | None = None,
                        cache_tag=None) -> np.ndarray:
    """Column k = score of the k-th pooled model (oldest first, pools in order).

    ``cache`` maps ``(id(entry), cache_tag)`` to score columns so repeated calls
    on the same chunk do not re-score old models.
    """
    if isinstance(pools, Level0Pool):
        pools = (pools,)
    sizes = [len(p) for p in pools] if sizes is None else list(sizes)
    if sum(sizes) == 0:
        raise ValueError("empty pool")
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != schema.dim:
        raise ValueError(f"expected (n, {schema.dim}) master features, got {features.shape}")
    cols = []
    for pool, size in zip(pools, sizes):
        projected = None
        for entry in pool.entries[:size]:
            key = (id(entry), cache_tag)
            if cache is not None and cache_tag is not None and key in cache:
                cols.append(cache[key])
                continue
            if projected is None:
                projected = project_matrix(features, pool.info_level, schema)
            col = entry.model.estimator.predict_proba(projected) if len(projected) \
                else np.zeros(0)
            if cache is not None and cache_tag is not None:
                cache[key] = col
            cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((len(features), 0))


def train_level1(pools, train_chunk: MonthChunk, model_family: str, schema: FeatureSchema,
                 tuner: Tuner, composition: str = "from_1", cache: dict | None = None
                 ) -> StackedEnsemble:
    if isinstance(pools, Level0Pool):
        pools = (pools,)
    if not any(len(p) for p in pools):
        raise ValueError("empty pool")
    chunk = train_chunk.labeled()
    y = chunk.labels
    if not ((y == 1).any() and (y == -1).any()):
        raise DegenerateLabelsError(
            f"degenerate labels in level-1 training chunk {format_year_month(chunk.t)}")
    sizes = tuple(len(p) for p in pools)
    meta = build_meta_features(pools, chunk.features, schema, sizes, cache, chunk.t)
    params, est = tuner(model_family, meta, y, ("level1", composition, chunk.t, sum(sizes)))
    return StackedEnsemble(tuple(pools), sizes, TrainedModel(est, model_family, None, params),
                           composition)


def predict_ensemble(ensemble: StackedEnsemble, features: np.ndarray, schema: FeatureSchema,
                     cache: dict | None = None, cache_tag=None) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if len(features) == 0:
        return np.zeros(0)
    meta = build_meta_features(ensemble.pools, features, schema, ensemble.sizes, cache,
                               cache_tag)
    return ensemble.level1.predict(meta)
