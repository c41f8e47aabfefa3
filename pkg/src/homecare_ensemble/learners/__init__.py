"""Level-0 / level-1 model families and their JSON serialisation."""
from __future__ import annotations

import json
from pathlib import Path

from .forest import (
    FEATURE_FRACTION_GRID, MIN_SAMPLES_GRID, N_TREES_GRID, ForestModel, Leaf, Split, Tree,
    gini, predict_forest, train_forest,
)
from .logistic import (
    DegenerateLabelsError, LinearModel, fit_lambda_path, lambda_grid, logreg_gradient,
    logreg_objective, predict_logreg, train_logreg,
)

FORMAT_VERSION = 1


def model_to_dict(model) -> dict:
    return {"format_version": FORMAT_VERSION, **model.to_dict()}


def model_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "linear":
        return LinearModel.from_dict(data)
    if kind == "forest":
        return ForestModel.from_dict(data)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path, **extra) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = model_to_dict(model)
    payload.update(extra)
    path.write_text(json.dumps(payload, sort_keys=True))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


__all__ = [
    "FEATURE_FRACTION_GRID", "MIN_SAMPLES_GRID", "N_TREES_GRID", "DegenerateLabelsError",
    "ForestModel", "Leaf", "LinearModel", "Split", "Tree", "fit_lambda_path", "gini",
    "lambda_grid", "load_model", "logreg_gradient", "logreg_objective", "model_from_dict",
    "model_to_dict", "predict_forest", "predict_logreg", "save_model", "train_forest",
    "train_logreg",
]
