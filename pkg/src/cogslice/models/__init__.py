"""Regressors for wb_cqi: LASSO, Elastic Net, random forest, gradient boosting
and their weighted combination, plus a JSON artifact format."""

from __future__ import annotations

import numpy as np

from ..ingest import CQI_MAX, CQI_MIN, round_half_away
from .combined import COMPONENT_ORDER, CombinedModel, WeightSearchResult, blend, search_combined_weights, weight_grid
from .config import TrainConfig
from .linear import ConvergenceError, LinearModel, train_elasticnet, train_lasso
from .trees import DecisionTree, ForestModel, GbtModel, build_tree, train_gbt, train_random_forest

__all__ = [
    "COMPONENT_ORDER",
    "CombinedModel",
    "ConvergenceError",
    "DecisionTree",
    "ForestModel",
    "GbtModel",
    "LinearModel",
    "TrainConfig",
    "WeightSearchResult",
    "blend",
    "build_tree",
    "model_from_dict",
    "model_kind",
    "model_to_dict",
    "predict",
    "predict_batch",
    "predict_cqi",
    "search_combined_weights",
    "train_elasticnet",
    "train_gbt",
    "train_lasso",
    "train_random_forest",
    "weight_grid",
]


class DimensionError(ValueError):
    pass


def model_kind(model) -> str:
    if isinstance(model, LinearModel):
        return model.kind
    if isinstance(model, ForestModel):
        return "forest"
    if isinstance(model, GbtModel):
        return "gbt"
    if isinstance(model, CombinedModel):
        return "combined"
    raise TypeError(f"not a model: {type(model).__name__}")


def predict_batch(model, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DimensionError(f"model expects {model.n_features} features, got {X.shape[1]}")
    return model.predict(X)


def predict(model, row) -> float:
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise DimensionError("predict takes a single feature vector")
    return float(predict_batch(model, row[None, :])[0])


def predict_cqi(model, row) -> int:
    """Prediction rounded half away from zero and clamped to the CQI range."""
    return int(np.clip(round_half_away(predict(model, row)), CQI_MIN, CQI_MAX))


def model_to_dict(model, feature_set_id: str = "") -> dict:
    kind = model_kind(model)
    d: dict = {"kind": kind, "feature_set_id": feature_set_id, "format": 1}
    if isinstance(model, LinearModel):
        d["params"] = {
            "coef_std": model.coef_std.tolist(),
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
            "y_mean": model.y_mean,
            "l1_penalty": model.l1_penalty,
            "l2_penalty": model.l2_penalty,
            "n_iter": model.n_iter,
        }
    elif isinstance(model, ForestModel):
        d["params"] = {
            "seeds": list(model.seeds),
            "mtry": model.mtry,
            "min_leaf": model.min_leaf,
            "bootstrap": model.bootstrap,
        }
        d["trees"] = [t.to_dict() for t in model.trees]
    elif isinstance(model, GbtModel):
        d["params"] = {
            "base_prediction": model.base_prediction,
            "learning_rate": model.learning_rate,
            "max_depth": model.max_depth,
            "n_features": model.n_features,
        }
        d["trees"] = [t.to_dict() for t in model.trees]
    else:
        d["params"] = {"weights": list(model.weights)}
        d["components"] = [model_to_dict(m, feature_set_id) for m in model.components]
    return d


def model_from_dict(d: dict):
    kind = d["kind"]
    p = d["params"]
    if kind in ("lasso", "elasticnet"):
        return LinearModel(
            np.asarray(p["coef_std"], dtype=float),
            np.asarray(p["mean"], dtype=float),
            np.asarray(p["std"], dtype=float),
            float(p["y_mean"]),
            float(p["l1_penalty"]),
            float(p["l2_penalty"]),
            kind,
            int(p.get("n_iter", 0)),
        )
    if kind == "forest":
        return ForestModel(
            tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            tuple(p["seeds"]),
            int(p["mtry"]),
            int(p["min_leaf"]),
            bool(p["bootstrap"]),
        )
    if kind == "gbt":
        return GbtModel(
            float(p["base_prediction"]),
            tuple(DecisionTree.from_dict(t) for t in d["trees"]),
            float(p["learning_rate"]),
            p["max_depth"],
            int(p["n_features"]),
        )
    if kind == "combined":
        return CombinedModel(tuple(model_from_dict(c) for c in d["components"]), tuple(p["weights"]))
    raise ValueError(f"unknown model kind {kind!r}")
