"""Model documents: a self-describing JSON format for trained models.

Floats round-trip exactly (shortest-decimal encoding both ways), keys are
sorted, so save -> load -> save is byte-stable and a reloaded model
predicts bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .regressors import GradientBoostedTreesRegressor, SgdLinearRegressor
from .stacking import StackedRegressor
from .tree import TreeNode

DOCUMENT_FORMAT = "anomflow-model"
DOCUMENT_VERSION = 1


def _tree_to_doc(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_to_doc(node.left),
        "right": _tree_to_doc(node.right),
    }


def _tree_from_doc(doc: dict) -> TreeNode:
    if "value" in doc:
        return TreeNode(value=float(doc["value"]))
    return TreeNode(
        feature=int(doc["feature"]),
        threshold=float(doc["threshold"]),
        left=_tree_from_doc(doc["left"]),
        right=_tree_from_doc(doc["right"]),
    )


def model_to_doc(model) -> dict:
    if isinstance(model, GradientBoostedTreesRegressor):
        kind = "gbt"
        state = {
            "init_value": model.init_value_,
            "n_features": model.n_features_in_,
            "trees": [_tree_to_doc(t) for t in model.trees_],
        }
        params = model.get_params()
    elif isinstance(model, SgdLinearRegressor):
        kind = "sgd"
        state = {
            "coef": model.coef_.tolist(),
            "intercept": model.intercept_,
            "feature_mean": model.feature_mean_.tolist(),
            "feature_scale": model.feature_scale_.tolist(),
            "n_features": model.n_features_in_,
        }
        params = model.get_params()
    elif isinstance(model, StackedRegressor):
        kind = "stacked"
        state = {
            "meta_weights": model.meta_weights_.tolist(),
            "meta_intercept": model.meta_intercept_,
            "n_features": model.n_features_in_,
            "bases": [
                {"name": name, "model": model_to_doc(base)}
                for name, base in model.base_estimators_
            ],
        }
        params = {k: v for k, v in model.get_params().items() if k != "estimators"}
    else:
        raise ValidationError(f"cannot serialize model of type {type(model).__name__}")
    return {
        "format": DOCUMENT_FORMAT,
        "version": DOCUMENT_VERSION,
        "kind": kind,
        "params": params,
        "state": state,
    }


def model_from_doc(doc: dict):
    if doc.get("format") != DOCUMENT_FORMAT:
        raise ValidationError("not a model document")
    if doc.get("version") != DOCUMENT_VERSION:
        raise ValidationError(f"unsupported model document version {doc.get('version')!r}")
    kind = doc.get("kind")
    params = doc.get("params", {})
    state = doc["state"]
    if kind == "gbt":
        model = GradientBoostedTreesRegressor(**params)
        model.init_value_ = float(state["init_value"])
        model.n_features_in_ = int(state["n_features"])
        model.trees_ = [_tree_from_doc(t) for t in state["trees"]]
        return model
    if kind == "sgd":
        model = SgdLinearRegressor(**params)
        model.coef_ = np.array(state["coef"], dtype=np.float64)
        model.intercept_ = float(state["intercept"])
        model.feature_mean_ = np.array(state["feature_mean"], dtype=np.float64)
        model.feature_scale_ = np.array(state["feature_scale"], dtype=np.float64)
        model.n_features_in_ = int(state["n_features"])
        return model
    if kind == "stacked":
        bases = [(b["name"], model_from_doc(b["model"])) for b in state["bases"]]
        model = StackedRegressor(estimators=bases, **params)
        model.base_estimators_ = bases
        model.meta_weights_ = np.array(state["meta_weights"], dtype=np.float64)
        model.meta_intercept_ = float(state["meta_intercept"])
        model.n_features_in_ = int(state["n_features"])
        return model
    raise ValidationError(f"unknown model kind {kind!r}")


def dumps_model(model) -> bytes:
    doc = model_to_doc(model)
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def loads_model(data: bytes | str):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid model document: {exc}") from exc
    return model_from_doc(doc)


def save_model(model, path) -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path):
    return loads_model(Path(path).read_bytes())
