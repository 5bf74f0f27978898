"""Versioned JSON artifacts for fitted models."""
from __future__ import annotations

import json

import numpy as np

from .linear import BayesianLinearModel, LinearModel
from .trees import EnsembleModel, RegressionTree

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def _tree_payload(tree):
    return {
        "feature": _arr(tree.feature), "threshold": _arr(tree.threshold),
        "left": _arr(tree.left), "right": _arr(tree.right), "value": _arr(tree.value),
        "n_features": tree.n_features, "max_depth": tree.max_depth,
        "min_samples_leaf": tree.min_samples_leaf,
    }


def _tree_from(d):
    return RegressionTree(
        np.asarray(d["feature"], dtype=np.intp), np.asarray(d["threshold"], dtype=float),
        np.asarray(d["left"], dtype=np.intp), np.asarray(d["right"], dtype=np.intp),
        np.asarray(d["value"], dtype=float), int(d["n_features"]), int(d["max_depth"]),
        int(d["min_samples_leaf"]))


def model_to_dict(model):
    if isinstance(model, LinearModel):
        body = {"type": "linear", "weights": _arr(model.weights),
                "intercept": model.intercept, "rank": model.rank}
    elif isinstance(model, BayesianLinearModel):
        body = {"type": "bayes_linear", "weights": _arr(model.weights),
                "covariance": _arr(model.covariance), "alpha": model.alpha,
                "lambdas": _arr(model.lambdas), "intercept": model.intercept,
                "x_offset": _arr(model.x_offset), "n_iterations": model.n_iterations,
                "converged": model.converged, "pruned": _arr(model.pruned)}
    elif isinstance(model, EnsembleModel):
        body = {"type": "ensemble", "kind": model.kind, "n_features": model.n_features,
                "learning_rate": model.learning_rate,
                "base_prediction": model.base_prediction,
                "tree_weights": _arr(model.tree_weights), "params": model.params,
                "trees": [_tree_payload(t) for t in model.trees]}
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return {"format_version": FORMAT_VERSION, "algorithm": model.algorithm, **body}


def model_from_dict(d):
    version = d.get("format_version")
    if not isinstance(version, int):
        raise ModelFormatError("artifact has no format_version")
    if version > FORMAT_VERSION:
        raise ModelFormatError(
            f"artifact format {version} is newer than supported format {FORMAT_VERSION}")
    kind = d.get("type")
    if kind == "linear":
        return LinearModel(np.asarray(d["weights"], dtype=float), float(d["intercept"]),
                           int(d["rank"]), d["algorithm"])
    if kind == "bayes_linear":
        return BayesianLinearModel(
            np.asarray(d["weights"], dtype=float), np.asarray(d["covariance"], dtype=float),
            float(d["alpha"]), np.asarray(d["lambdas"], dtype=float), float(d["intercept"]),
            None if d["x_offset"] is None else np.asarray(d["x_offset"], dtype=float),
            d["algorithm"], int(d["n_iterations"]), bool(d["converged"]),
            None if d["pruned"] is None else np.asarray(d["pruned"], dtype=bool))
    if kind == "ensemble":
        return EnsembleModel(d["algorithm"], d["kind"], tuple(_tree_from(t) for t in d["trees"]),
                             np.asarray(d["tree_weights"], dtype=float), int(d["n_features"]),
                             float(d["learning_rate"]), float(d["base_prediction"]),
                             dict(d["params"]))
    raise ModelFormatError(f"unknown model type {kind!r}")


def dumps(model):
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def loads(text):
    return model_from_dict(json.loads(text))
