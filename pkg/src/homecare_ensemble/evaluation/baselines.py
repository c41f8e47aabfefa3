"""Heuristic baselines: repeat the last three months, or the same period a
year earlier."""
from __future__ import annotations

from typing import Collection

import numpy as np

from ..cohort import AggregatedInstance, FeatureSchema, MonthChunk


def baseline_3_months(instance: AggregatedInstance, schema: FeatureSchema) -> int:
    """1 iff the instance's window holds at least one large increase."""
    return int(instance.features[schema.index("n_large_increases")] > 0)


def baseline_12_months(instance: AggregatedInstance, event_months: Collection[int]) -> int:
    """1 iff the citizen had a large increase in months ``window_end-11 ..
    window_end-9``, i.e. the horizon shifted back one year."""
    t = instance.window_end
    return int(any(t - 11 <= m <= t - 9 for m in event_months))


def baseline_scores(chunk: MonthChunk, which: str, schema: FeatureSchema) -> np.ndarray:
    """Vectorised baseline scores for every instance of ``chunk``."""
    if which == "baseline_3m":
        return (chunk.features[:, schema.index("n_large_increases")] > 0).astype(np.float64)
    if which == "baseline_12m":
        return (chunk.year_ago_increases > 0).astype(np.float64)
    raise ValueError(f"unknown baseline {which!r}")
