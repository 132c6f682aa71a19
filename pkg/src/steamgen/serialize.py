"""Versioned plain-text (JSON) model files.

Every file is an object ``{"format": "steamgen-model", "version": 1,
"metadata": {...}, "model": {...}}``; each model node carries a ``type`` tag
plus its parameter arrays. Floats are written with ``repr`` and so round-trip
exactly.
"""
from __future__ import annotations

import json

import numpy as np

from .cate import CateModel
from .data import Column
from .generators import (FixedPropensity, GaussianMixture, JointModel, JointXWModel,
                         MarginalHistogram, OutcomeStage, SteamModel)
from .learners import OutcomeModel, PropensityModel, Tree

FORMAT = "steamgen-model"
VERSION = 1


def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def _columns(cols):
    return [{"name": c.name, "kind": c.kind, "role": c.role} for c in cols]


def _load_columns(items):
    return tuple(Column(c["name"], c["kind"], c["role"]) for c in items)


def to_dict(obj) -> dict:
    # local import: privacy depends on generators, not the other way round
    from .privacy import DpRidgeModel

    if isinstance(obj, PropensityModel):
        return {"type": "propensity", "kind": obj.kind, "coef": _arr(obj.coef),
                "intercept": obj.intercept, "n_features": obj.n_features,
                "feature_mean": _arr(obj.feature_mean), "feature_scale": _arr(obj.feature_scale),
                "clip_lo": obj.clip_lo, "max_norm": obj.max_norm, "n_iter": obj.n_iter,
                "converged": obj.converged}
    if isinstance(obj, FixedPropensity):
        return {"type": "fixed_propensity", "p": obj.p}
    if isinstance(obj, Tree):
        return {"type": "tree", "feature": _arr(obj.feature), "threshold": _arr(obj.threshold),
                "left": _arr(obj.left), "right": _arr(obj.right), "value": _arr(obj.value)}
    if isinstance(obj, OutcomeModel):
        return {"type": "outcome", "kind": obj.kind, "n_features": obj.n_features,
                "intercept": obj.intercept, "coef": _arr(obj.coef), "poly2": obj.poly2,
                "learning_rate": obj.learning_rate, "trees": [to_dict(t) for t in obj.trees]}
    if isinstance(obj, DpRidgeModel):
        return {"type": "dp_ridge", "beta": _arr(obj.beta), "n_features": obj.n_features,
                "feature_scale": obj.feature_scale, "y_bound": obj.y_bound}
    if isinstance(obj, MarginalHistogram):
        return {"type": "marginal_hist", "columns": _columns(obj.columns),
                "edges": [_arr(e) for e in obj.edges], "masses": [_arr(m) for m in obj.masses]}
    if isinstance(obj, GaussianMixture):
        return {"type": "gmm", "columns": _columns(obj.columns), "weights": _arr(obj.weights),
                "means": _arr(obj.means), "variances": _arr(obj.variances),
                "log_likelihood": list(obj.log_likelihood), "converged": obj.converged}
    if isinstance(obj, OutcomeStage):
        return {"type": "outcome_stage", "param": obj.param, "models": [to_dict(m) for m in obj.models],
                "sigma": list(obj.sigma), "binary": obj.binary, "noise": obj.noise}
    if isinstance(obj, SteamModel):
        return {"type": "steam", "schema": _columns(obj.schema), "qx": to_dict(obj.qx),
                "qw": to_dict(obj.qw), "qy": to_dict(obj.qy)}
    if isinstance(obj, JointModel):
        return {"type": "joint", "schema": _columns(obj.schema), "generator": to_dict(obj.generator)}
    if isinstance(obj, JointXWModel):
        return {"type": "steam_jointxw", "schema": _columns(obj.schema), "qxw": to_dict(obj.qxw),
                "qy": to_dict(obj.qy)}
    if isinstance(obj, CateModel):
        return {"type": "cate", "kind": obj.kind, "n_features": obj.n_features,
                "stage1": [to_dict(m) for m in obj.stage1],
                "stage2": None if obj.stage2 is None else to_dict(obj.stage2),
                "propensity": None if obj.propensity is None else to_dict(obj.propensity),
                "warnings": list(obj.warnings)}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def from_dict(d: dict):
    from .privacy import DpRidgeModel

    t = d.get("type")
    f64 = lambda v: np.asarray(v, dtype=float)  # noqa: E731
    if t == "propensity":
        return PropensityModel(d["kind"], f64(d["coef"]), float(d["intercept"]), int(d["n_features"]),
                               f64(d["feature_mean"]), f64(d["feature_scale"]), float(d["clip_lo"]),
                               d["max_norm"], int(d["n_iter"]), bool(d["converged"]))
    if t == "fixed_propensity":
        return FixedPropensity(float(d["p"]))
    if t == "tree":
        i64 = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
        return Tree(i64(d["feature"]), f64(d["threshold"]), i64(d["left"]), i64(d["right"]), f64(d["value"]))
    if t == "outcome":
        return OutcomeModel(d["kind"], int(d["n_features"]), float(d["intercept"]),
                            None if d["coef"] is None else f64(d["coef"]), bool(d["poly2"]),
                            tuple(from_dict(x) for x in d["trees"]), float(d["learning_rate"]))
    if t == "dp_ridge":
        return DpRidgeModel(f64(d["beta"]), int(d["n_features"]), float(d["feature_scale"]), float(d["y_bound"]))
    if t == "marginal_hist":
        return MarginalHistogram(_load_columns(d["columns"]), tuple(f64(e) for e in d["edges"]),
                                 tuple(f64(m) for m in d["masses"]))
    if t == "gmm":
        return GaussianMixture(_load_columns(d["columns"]), f64(d["weights"]), f64(d["means"]),
                               f64(d["variances"]), tuple(d["log_likelihood"]), bool(d["converged"]))
    if t == "outcome_stage":
        return OutcomeStage(d["param"], tuple(from_dict(m) for m in d["models"]), tuple(d["sigma"]),
                            bool(d["binary"]), bool(d["noise"]))
    if t == "steam":
        return SteamModel(_load_columns(d["schema"]), from_dict(d["qx"]), from_dict(d["qw"]), from_dict(d["qy"]))
    if t == "joint":
        return JointModel(_load_columns(d["schema"]), from_dict(d["generator"]))
    if t == "steam_jointxw":
        return JointXWModel(_load_columns(d["schema"]), from_dict(d["qxw"]), from_dict(d["qy"]))
    if t == "cate":
        return CateModel(d["kind"], int(d["n_features"]), tuple(from_dict(m) for m in d["stage1"]),
                         None if d["stage2"] is None else from_dict(d["stage2"]),
                         None if d["propensity"] is None else from_dict(d["propensity"]),
                         tuple(d["warnings"]))
    raise ValueError(f"unknown model type {t!r}")


def dumps(obj, metadata: dict | None = None) -> str:
    doc = {"format": FORMAT, "version": VERSION, "metadata": metadata or {}, "model": to_dict(obj)}
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def loads(text: str):
    return load_document(text)[0]


def load_document(text: str):
    """Return ``(model, metadata)``."""
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ValueError("not a steamgen model file")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')!r}")
    return from_dict(doc["model"]), doc.get("metadata", {})


def save_model(obj, path, metadata: dict | None = None) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj, metadata))


def load_model(path):
    with open(path) as fh:
        return loads(fh.read())
