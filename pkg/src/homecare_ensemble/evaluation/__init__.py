from .baselines import baseline_12_months, baseline_3_months, baseline_scores
from .cv import (
    FoldAssignment, GridResult, HyperParams, LRParams, RFParams, StratificationError,
    cross_validate, default_grid, default_lr_grid, default_rf_grid, grid_search, rf_grid,
    stratified_folds,
)
from .metrics import AUCUndefinedError, auc

__all__ = [
    "AUCUndefinedError", "FoldAssignment", "GridResult", "HyperParams", "LRParams",
    "RFParams", "StratificationError", "auc", "baseline_12_months", "baseline_3_months",
    "baseline_scores", "cross_validate", "default_grid", "default_lr_grid", "default_rf_grid",
    "grid_search", "rf_grid", "stratified_folds",
]
