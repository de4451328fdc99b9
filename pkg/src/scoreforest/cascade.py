"""SCORE cascade: layers of ExtraTrees plus lasso tree selection, fit on residuals.

Each layer grows a forest on its own input matrix, regresses the current
target on the per-tree predictions with a cross-validated lasso, and passes
the residuals on as the next layer's target. Layer inputs are either the
previous layer's selected tree outputs (``local``) or the original features
plus every earlier selected tree output (``global``). Layers are added while
the validation MSE of the cumulative prediction improves by more than
``tau0``; the prediction weights layer ``l`` (1-based) by ``gamma ** l``.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from . import lasso
from .dataset import Dataset
from .extratrees import ExtraTree, ForestConfig, build_forest, predict_forest

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FORMAT_NAME = "scoreforest-cascade"


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed or has an unsupported version."""


class OriginalFeature(NamedTuple):
    index: int


class RepresentationFeature(NamedTuple):
    layer: int  # 0-based layer that owns the tree
    tree: int   # index into that layer's forest


@dataclass(frozen=True)
class CascadeConfig:
    forest: ForestConfig = field(default_factory=lambda: ForestConfig(n_trees=250))
    x_option: str = "global"
    gamma: float = 1.0
    tau0: float = 0.0
    max_layers: int = 8
    cv_folds: int = 10
    n_lambdas: int = 100
    lambda_min_ratio: Optional[float] = None
    cv_rule: str = "one_se"
    n_jobs: int = 1

    def __post_init__(self):
        if self.x_option not in ("local", "global"):
            raise ValueError(f"x_option must be 'local' or 'global', got {self.x_option!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.tau0 < 0:
            raise ValueError(f"tau0 must be non-negative, got {self.tau0}")
        if self.max_layers < 1:
            raise ValueError(f"max_layers must be >= 1, got {self.max_layers}")
        if self.cv_rule not in ("min", "one_se"):
            raise ValueError(f"cv_rule must be 'min' or 'one_se', got {self.cv_rule!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["forest"] = asdict(self.forest)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeConfig":
        d = dict(d)
        d["forest"] = ForestConfig(**d["forest"])
        return cls(**d)


@dataclass(eq=False)
class Layer:
    trees: List[ExtraTree]
    intercept: float
    coefficients: np.ndarray
    lam: float
    input_map: List[tuple]

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)

    @property
    def width(self) -> int:
        return len(self.input_map)


@dataclass(eq=False)
class CascadeModel:
    layers: List[Layer]
    x_option: str
    gamma: float
    tau0: float
    feature_names: Tuple[str, ...]
    config: dict = field(default_factory=dict)
    mse_trace: List[float] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # residual targets of each kept layer on the training rows; not persisted
    train_targets: Optional[List[np.ndarray]] = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return len(self.feature_names)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


# --- routing ----------------------------------------------------------------

def _input_map(x_option: str, p: int, layers: List[Layer]) -> List[tuple]:
    if not layers:
        return [OriginalFeature(j) for j in range(p)]
    if x_option == "local":
        k = len(layers) - 1
        return [RepresentationFeature(k, int(i)) for i in layers[k].selected]
    src = [OriginalFeature(j) for j in range(p)]
    for k, layer in enumerate(layers):
        src.extend(RepresentationFeature(k, int(i)) for i in layer.selected)
    return src


def _assemble(X: np.ndarray, input_map, rep: Dict[tuple, np.ndarray]) -> np.ndarray:
    Z = np.empty((X.shape[0], len(input_map)))
    for c, src in enumerate(input_map):
        if isinstance(src, RepresentationFeature):
            Z[:, c] = rep[(src.layer, src.tree)]
        else:
            Z[:, c] = X[:, src.index]
    return Z


def _layer_outputs(layers: List[Layer], X: np.ndarray):
    """Yield ``(layer_index, selected tree outputs)``, routing rows through every layer."""
    rep: Dict[tuple, np.ndarray] = {}
    for k, layer in enumerate(layers):
        Z = _assemble(X, layer.input_map, rep)
        sel = layer.selected
        T = predict_forest([layer.trees[i] for i in sel], Z)
        for c, i in enumerate(sel):
            rep[(k, int(i))] = T[:, c]
        yield k, T


def _layer_fit(layer: Layer, T_sel: np.ndarray) -> np.ndarray:
    # column-by-column accumulation: bit-identical whatever the memory layout of T_sel,
    # which a BLAS matvec does not guarantee
    acc = np.zeros(T_sel.shape[0])
    for c, b in enumerate(layer.coefficients[layer.selected]):
        acc += b * T_sel[:, c]
    return layer.intercept + acc


def _check_width(model: CascadeModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.p:
        raise ValueError(f"input has {X.shape[-1]} columns but the model expects {model.p}")
    return X


def layer_contributions(model: CascadeModel, X, gamma: Optional[float] = None) -> np.ndarray:
    """``n x L`` matrix whose column ``l`` is ``gamma**(l+1) * (b0 + T_sel @ b_sel)``.

    ``gamma`` overrides the model's learning rate (``1.0`` gives unweighted
    layer fits).
    """
    X = _check_width(model, X)
    g = model.gamma if gamma is None else float(gamma)
    out = np.empty((X.shape[0], model.n_layers))
    for k, T in _layer_outputs(model.layers, X):
        out[:, k] = g ** (k + 1) * _layer_fit(model.layers[k], T)
    return out


def predict(model: CascadeModel, X) -> np.ndarray:
    """Cascade prediction: layer contributions summed left to right."""
    contrib = layer_contributions(model, X)
    out = np.zeros(contrib.shape[0])
    for k in range(contrib.shape[1]):
        out = out + contrib[:, k]
    return out


# --- training -----------------------------------------------------------------

def _mse(a, b) -> float:
    r = np.asarray(a) - np.asarray(b)
    return float(r @ r / len(r))


def train(train: Dataset, validation: Dataset, cfg: CascadeConfig = CascadeConfig()) -> CascadeModel:
    """Fit a cascade on ``train``, using ``validation`` only for the stopping rule."""
    if validation is None or validation.n < 1:
        raise ValueError("a non-empty validation set is required")
    if validation.p != train.p:
        raise ValueError(
            f"validation has {validation.p} features but training has {train.p}")
    X, y = np.asarray(train.features), np.asarray(train.target)
    Xv, yv = np.asarray(validation.features), np.asarray(validation.target)
    p = train.p

    layers: List[Layer] = []
    rep_tr: Dict[tuple, np.ndarray] = {}
    rep_va: Dict[tuple, np.ndarray] = {}
    target = y.copy()
    targets = [target]
    val_pred = np.zeros(len(yv))
    mse_trace: List[float] = []
    meta = {"n_train": train.n, "n_validation": validation.n, "discarded": None,
            "selected_counts": [], "deltas": [], "warnings": []}

    for k in range(cfg.max_layers):
        imap = _input_map(cfg.x_option, p, layers)
        Z = _assemble(X, imap, rep_tr)
        Zv = _assemble(Xv, imap, rep_va)
        trees = build_forest(Z, target, cfg.forest, layer=k, n_jobs=cfg.n_jobs)
        T = predict_forest(trees, Z)
        if k == 0:
            meta["forest_mean_validation_mse"] = _mse(yv, predict_forest(trees, Zv).mean(axis=1))
        cv = lasso.cv_tune(T, target, n_folds=cfg.cv_folds, n_lambdas=cfg.n_lambdas,
                           rule=cfg.cv_rule, seed=[int(cfg.forest.seed), k],
                           lambda_min_ratio=cfg.lambda_min_ratio)
        fit = cv.fit
        layer = Layer(trees, fit.intercept, fit.coefficients.copy(), fit.lam, imap)
        sel = layer.selected

        if sel.size == 0:
            if k == 0:
                msg = "layer 1 selected no trees; model is intercept-only"
                log.warning(msg)
                meta["warnings"].append(msg)
                layers.append(layer)
                mse_trace.append(_mse(yv, cfg.gamma * layer.intercept * np.ones(len(yv))))
                meta["selected_counts"].append(0)
                targets.append(target - _layer_fit(layer, T[:, sel]))
            else:
                meta["discarded"] = {"layer": k + 1, "reason": "no trees selected"}
            break

        T_sel = T[:, sel]
        Tv_sel = predict_forest([trees[i] for i in sel], Zv)
        cand = val_pred + cfg.gamma ** (k + 1) * _layer_fit(layer, Tv_sel)
        mse = _mse(yv, cand)
        delta = mse if k == 0 else mse_trace[-1] - mse
        if k > 0 and delta <= cfg.tau0:
            meta["discarded"] = {"layer": k + 1, "reason": "validation gain below tau0",
                                 "mse": mse, "delta": delta}
            break

        layers.append(layer)
        mse_trace.append(mse)
        meta["deltas"].append(delta)
        meta["selected_counts"].append(int(sel.size))
        val_pred = cand
        target = target - _layer_fit(layer, T_sel)
        targets.append(target)
        for c, i in enumerate(sel):
            rep_tr[(k, int(i))] = T_sel[:, c]
            rep_va[(k, int(i))] = Tv_sel[:, c]
        if k == 0 and delta <= cfg.tau0:
            break

    meta["seed"] = cfg.forest.seed
    return CascadeModel(layers, cfg.x_option, cfg.gamma, cfg.tau0, tuple(train.feature_names),
                        cfg.to_dict(), mse_trace, meta, targets)


# --- persistence --------------------------------------------------------------

def _source_to_json(src) -> list:
    if isinstance(src, RepresentationFeature):
        return ["t", src.layer, src.tree]
    return ["x", src.index]


def _source_from_json(rec) -> tuple:
    if rec[0] == "t":
        return RepresentationFeature(int(rec[1]), int(rec[2]))
    if rec[0] == "x":
        return OriginalFeature(int(rec[1]))
    raise ModelFormatError(f"unknown input source {rec!r}")


def to_json_dict(model: CascadeModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "schema_version": SCHEMA_VERSION,
        "config": model.config,
        "x_option": model.x_option,
        "gamma": model.gamma,
        "tau0": model.tau0,
        "feature_names": list(model.feature_names),
        "mse_trace": list(model.mse_trace),
        "metadata": model.metadata,
        "layers": [
            {
                "trees": [t.to_dict() for t in layer.trees],
                "selection": {
                    "intercept": layer.intercept,
                    "coefficients": [float(b) for b in layer.coefficients],
                    "lambda": layer.lam,
                },
                "input_map": [_source_to_json(s) for s in layer.input_map],
            }
            for layer in model.layers
        ],
    }


def from_json_dict(d: dict) -> CascadeModel:
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a scoreforest cascade model file")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelFormatError(
            f"unsupported model schema version {version!r} (this build reads {SCHEMA_VERSION})")
    try:
        layers = []
        for rec in d["layers"]:
            imap = [_source_from_json(s) for s in rec["input_map"]]
            trees = [ExtraTree.from_dict(t, len(imap)) for t in rec["trees"]]
            sel = rec["selection"]
            coef = np.array(sel["coefficients"], dtype=np.float64)
            if len(coef) != len(trees):
                raise ModelFormatError("coefficient count does not match forest size")
            layers.append(Layer(trees, float(sel["intercept"]), coef, float(sel["lambda"]), imap))
        return CascadeModel(layers, d["x_option"], float(d["gamma"]), float(d["tau0"]),
                            tuple(d["feature_names"]), d.get("config", {}),
                            list(d.get("mse_trace", [])), d.get("metadata", {}))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from None


def save(model: CascadeModel, path) -> None:
    # json writes floats as shortest round-trip repr, so values reload bit-identically
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(to_json_dict(model), fh)
    os.replace(tmp, path)


def load(path) -> CascadeModel:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: cannot parse model file ({exc})") from None
    return from_json_dict(d)
