"""Stacked temporal ensembles for flagging upcoming large increases in
citizens' home-care hours."""
from __future__ import annotations

__version__ = "0.1.0"

from .cohort import (
    AggregatedInstance, CitizenMonthRecord, CohortDataError, FeatureSchema, InformationLevel,
    MonthChunk, aggregate_windows, build_feature_schema, emit_csv, increase_events, ingest_csv,
    monthly_timeline, project, project_matrix,
)
from .ensemble import StackedEnsemble, TrainedModel, Tuner
from .evaluation import auc, grid_search, stratified_folds
from .learners import ForestModel, LinearModel, train_forest, train_logreg
from .protocol import MonthlyResult, mean_auc, rolling_protocol
from .synthgen import SyntheticConfig, generate_cohort

__all__ = [
    "AggregatedInstance", "CitizenMonthRecord", "CohortDataError", "FeatureSchema",
    "ForestModel", "InformationLevel", "LinearModel", "MonthChunk", "MonthlyResult",
    "StackedEnsemble", "SyntheticConfig", "TrainedModel", "Tuner", "aggregate_windows", "auc",
    "build_feature_schema", "emit_csv", "generate_cohort", "grid_search", "increase_events",
    "ingest_csv", "mean_auc", "monthly_timeline", "project", "project_matrix", "rolling_protocol",
    "stratified_folds", "train_forest", "train_logreg",
]
