"""Rolling monthly evaluation: for every test month ``t`` train on data that
was fully labelled three months earlier and score chunk ``t``."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cohort import FeatureSchema, InformationLevel, MonthChunk, format_year_month
from .ensemble import (
    COMPOSITIONS, TRAINING_LAG, Level0Pool, StackedEnsemble, TrainedModel, Tuner,
    predict_ensemble, train_level0, train_level1,
)
from .evaluation.baselines import baseline_scores
from .evaluation.metrics import auc

BASELINES = ("baseline_3m", "baseline_12m")
SINGLE_METHODS = {"LR_last": ("LR", "last_month"), "LR_all": ("LR", "all_previous"),
                  "RF_last": ("RF", "last_month"), "RF_all": ("RF", "all_previous")}
_STACKED = re.compile(r"^(LR|RF)\+(LR|RF)/(from_1|from_2|from_1_and_2)$")


class ProtocolError(RuntimeError):
    """A step of the protocol failed; the message names method, level and month."""

    def __init__(self, method: str, level, month: int | None, cause: Exception):
        where = format_year_month(month) if month is not None else "-"
        super().__init__(f"{method} @ {level} @ {where}: {cause}")
        self.method, self.level, self.month, self.cause = method, str(level), month, cause
        self.partial: list[MonthlyResult] = []


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str                       # baseline, single, stacked
    family0: str | None = None
    variant: str | None = None
    family1: str | None = None
    composition: str | None = None


def parse_method(name: str) -> MethodSpec:
    """``baseline_3m``, ``baseline_12m``, ``LR_all`` ... or stacked
    ``<level0>+<level1>/<from_1|from_2|from_1_and_2>``, e.g. ``LR+RF/from_2``."""
    if name in BASELINES:
        return MethodSpec(name, "baseline")
    if name in SINGLE_METHODS:
        fam, var = SINGLE_METHODS[name]
        return MethodSpec(name, "single", family0=fam, variant=var)
    m = _STACKED.match(name)
    if m:
        return MethodSpec(name, "stacked", family0=m.group(1), family1=m.group(2),
                          composition=m.group(3))
    raise ValueError(f"unknown method {name!r}")


@dataclass(frozen=True)
class MonthlyResult:
    t: int
    method: str
    info_level: str
    auc: float          # nan when the test chunk lacks a class
    n_test: int
    n_pos: int

    @property
    def defined(self) -> bool:
        return not math.isnan(self.auc)


@dataclass
class ProtocolSettings:
    tuner: Tuner = field(default_factory=Tuner)
    test_first: int | None = None
    test_last: int | None = None
    tune_every: int = 1


class Level0Store:
    """Level-0 models shared by every method of a run, keyed by
    ``(family, variant, level, month)``.  With ``tune_every > 1`` the grid search
    runs every ``tune_every`` trainable months and the months between refit
    with the last selected hyperparameters."""

    def __init__(self, chunks: Mapping[int, MonthChunk], schema: FeatureSchema,
                 settings: ProtocolSettings):
        self.chunks, self.schema, self.settings = chunks, schema, settings
        self.models: dict[tuple, TrainedModel] = {}
        self._params: dict[tuple, tuple[int, object]] = {}

    def get(self, family: str, variant: str, level: InformationLevel, t: int,
            first_trainable: int) -> TrainedModel:
        key = (family, variant, level, t)
        if key not in self.models:
            pkey = (family, variant, level)
            params = None
            every = max(1, self.settings.tune_every)
            if (t - first_trainable) % every != 0 and pkey in self._params:
                params = self._params[pkey][1]
            model = train_level0(self.chunks, t, variant, family, level, self.schema,
                                 self.settings.tuner, params=params)
            if params is None:
                self._params[pkey] = (t, model.params)
            self.models[key] = model
        return self.models[key]


@dataclass
class MethodRun:
    results: list[MonthlyResult]
    final_model: TrainedModel | None = None
    final_ensemble: StackedEnsemble | None = None


def trainable_months(chunks: Mapping[int, MonthChunk]) -> list[int]:
    """Months ``t`` with labelled chunks at both ``t`` and ``t-3``."""
    return [t for t in sorted(chunks)
            if chunks[t].n_defined and t - TRAINING_LAG in chunks
            and chunks[t - TRAINING_LAG].n_defined]


def test_months(chunks: Mapping[int, MonthChunk], settings: ProtocolSettings) -> list[int]:
    labeled = [t for t in sorted(chunks) if chunks[t].n_defined]
    if len(labeled) < TRAINING_LAG + 1:
        raise ValueError(f"need at least {TRAINING_LAG + 1} labelled chunks, got {len(labeled)}")
    months = trainable_months(chunks)
    if settings.test_first is not None:
        if not months or settings.test_first < months[0]:
            raise ValueError(
                f"insufficient history before first test month "
                f"{format_year_month(settings.test_first)}")
        months = [t for t in months if t >= settings.test_first]
    if settings.test_last is not None:
        months = [t for t in months if t <= settings.test_last]
    if not months:
        raise ValueError("no test months in span")
    return months


def _score_result(t, method, level, scores, labels) -> MonthlyResult:
    n_pos = int((labels == 1).sum())
    n_test = len(labels)
    value = auc(scores, labels) if 0 < n_pos < n_test else math.nan
    return MonthlyResult(t, method, str(level), value, n_test, n_pos)


def run_method(chunks, method: str | MethodSpec, level, schema: FeatureSchema,
               settings: ProtocolSettings | None = None, store: Level0Store | None = None
               ) -> MethodRun:
    settings = settings or ProtocolSettings()
    spec = parse_method(method) if isinstance(method, str) else method
    level = InformationLevel(level)
    cmap = chunks if isinstance(chunks, Mapping) else {c.t: c for c in chunks}
    if store is None:
        store = Level0Store(cmap, schema, settings)
    try:
        months = test_months(cmap, settings)
    except ValueError as exc:
        raise ProtocolError(spec.name, level, None, exc) from exc
    trainable = trainable_months(cmap)
    first_trainable = trainable[0]
    run = MethodRun([])

    pools: dict[str, Level0Pool] = {}
    cache: dict = {}
    if spec.kind == "stacked":
        pools = {v: Level0Pool(level) for v in COMPOSITIONS[spec.composition]}
    pending = iter(m for m in trainable if m <= months[-1])

    for t in months:
        current = None
        try:
            test = cmap[t].labeled()
            if spec.kind == "baseline":
                scores = baseline_scores(test, spec.name, schema)
            elif spec.kind == "single":
                current = store.get(spec.family0, spec.variant, level, t, first_trainable)
                scores = current.predict(test.features, schema)
                run.final_model = current
            else:
                # pools hold every model trained up to and including month t
                for m in pending:
                    for variant, pool in pools.items():
                        pool.add(m, store.get(spec.family0, variant, level, m,
                                              first_trainable), variant)
                    if m == t:
                        break
                ens = train_level1(tuple(pools.values()), cmap[t - TRAINING_LAG],
                                   spec.family1, schema, settings.tuner,
                                   spec.composition, cache)
                scores = predict_ensemble(ens, test.features, schema, cache, t)
                run.final_ensemble = ens
            run.results.append(_score_result(t, spec.name, level, scores, test.labels))
        except Exception as exc:
            err = exc if isinstance(exc, ProtocolError) else ProtocolError(spec.name, level, t, exc)
            err.partial = list(run.results)
            raise err from exc
    return run


def rolling_protocol(chunks, method: str | MethodSpec, level, schema: FeatureSchema,
                     settings: ProtocolSettings | None = None,
                     store: Level0Store | None = None) -> list[MonthlyResult]:
    return run_method(chunks, method, level, schema, settings, store).results


def mean_auc(results: Sequence[MonthlyResult]) -> float:
    """Mean over months with a defined AUC (nan if none)."""
    values = [r.auc for r in results if r.defined]
    return float(np.mean(values)) if values else math.nan
