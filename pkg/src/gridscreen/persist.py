"""Versioned JSON container for trained super learners.

Floats are written with Python's shortest round-trip repr, so a save and
reload gives bit-identical predictions.  Keys are sorted and the layout is
fixed, so the same model always produces the same bytes.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .learners.linear import LinearModel
from .learners.preprocess import Preprocessor
from .learners.stacking import LEARNERS, BaseModels, Hyperparameters, TrainedEnsemble
from .learners.svm import CalibratedSVM, LinearSVM, PlattScaler
from .learners.trees import TreeEnsemble

FORMAT = "gridscreen-model"
VERSION = 1


class ModelFormatError(ValueError):
    """File is not a readable model container."""


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _ints(a) -> list[int]:
    return [int(v) for v in np.asarray(a).ravel()]


def _trees(t: TreeEnsemble) -> dict:
    return {"feature": _ints(t.feature), "threshold": _floats(t.threshold), "left": _ints(t.left),
            "right": _ints(t.right), "value": _floats(t.value), "roots": _ints(t.roots),
            "n_features": int(t.n_features)}


def _linear(m: LinearModel) -> dict:
    return {"coef": _floats(m.coef), "intercept": float(m.intercept), "converged": bool(m.converged),
            "n_iter": int(m.n_iter), "lam": float(m.lam)}


def to_dict(model: TrainedEnsemble) -> dict:
    m = model.models
    return {
        "format": FORMAT,
        "version": VERSION,
        "columns": list(model.columns),
        "seed": int(model.seed),
        "cv_loss": float(model.cv_loss),
        "hyperparameters": model.hyperparameters.to_dict(),
        "weights": dict(zip(LEARNERS, _floats(model.weights))),
        "preprocessor": {"medians": _floats(model.preprocessor.medians),
                         "means": _floats(model.preprocessor.means),
                         "scales": _floats(model.preprocessor.scales)},
        "models": {
            "random_forest": _trees(m.random_forest),
            "bagged_trees": _trees(m.bagged_trees),
            "lasso": _linear(m.lasso),
            "svm": {"coef": _floats(m.svm.svm.coef), "intercept": float(m.svm.svm.intercept),
                    "platt_a": float(m.svm.platt.a), "platt_b": float(m.svm.platt.b)},
            "logistic": _linear(m.logistic),
        },
    }


def _tree_from(d: dict) -> TreeEnsemble:
    return TreeEnsemble(np.asarray(d["feature"], dtype=np.int64),
                        np.asarray(d["threshold"], dtype=np.float64),
                        np.asarray(d["left"], dtype=np.int64),
                        np.asarray(d["right"], dtype=np.int64),
                        np.asarray(d["value"], dtype=np.float64),
                        np.asarray(d["roots"], dtype=np.int64), int(d["n_features"]))


def _linear_from(d: dict) -> LinearModel:
    return LinearModel(np.asarray(d["coef"], dtype=np.float64), float(d["intercept"]),
                       bool(d["converged"]), int(d["n_iter"]), float(d["lam"]))


def from_dict(d: dict) -> TrainedEnsemble:
    if not isinstance(d, dict) or d.get("format") != FORMAT:
        raise ModelFormatError("not a gridscreen model file")
    if d.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {d.get('version')!r}; expected {VERSION}")
    try:
        p = d["preprocessor"]
        m = d["models"]
        svm = m["svm"]
        models = BaseModels(
            random_forest=_tree_from(m["random_forest"]),
            bagged_trees=_tree_from(m["bagged_trees"]),
            lasso=_linear_from(m["lasso"]),
            svm=CalibratedSVM(LinearSVM(np.asarray(svm["coef"], dtype=np.float64), float(svm["intercept"])),
                              PlattScaler(float(svm["platt_a"]), float(svm["platt_b"]))),
            logistic=_linear_from(m["logistic"]),
        )
        return TrainedEnsemble(
            columns=tuple(d["columns"]),
            preprocessor=Preprocessor(np.asarray(p["medians"], dtype=np.float64),
                                      np.asarray(p["means"], dtype=np.float64),
                                      np.asarray(p["scales"], dtype=np.float64)),
            models=models,
            weights=np.asarray([d["weights"][k] for k in LEARNERS], dtype=np.float64),
            hyperparameters=Hyperparameters.from_mapping(d["hyperparameters"]),
            seed=int(d["seed"]),
            cv_loss=float(d["cv_loss"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from None


def dumps(model: TrainedEnsemble) -> str:
    return json.dumps(to_dict(model), sort_keys=True, separators=(",", ":")) + "\n"


def save_model(model: TrainedEnsemble, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        fh.write(dumps(model))


def load_model(path) -> TrainedEnsemble:
    try:
        with open(os.fspath(path), encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from None
    return from_dict(d)
