"""Additive grove model: intercept plus one subnet per feature group."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import SchemaError, SubnetParams
from .schema import FeatureSchema, GroveArchitecture, group_label

FORMAT_VERSION = 1
TASKS = ("regression", "binary_classification")


@dataclass(frozen=True)
class Prediction:
    score: float
    probability: float | None = None


@dataclass(frozen=True)
class GroveModel:
    intercept: float
    subnets: dict  # group label -> SubnetParams
    arch: GroveArchitecture
    schema: FeatureSchema
    task: str = "regression"
    centering: dict = field(default_factory=dict)  # label -> offset moved into the intercept

    def __post_init__(self):
        if self.task not in TASKS:
            raise SchemaError(f"unknown task {self.task!r}")
        if set(self.subnets) != set(self.arch.labels):
            raise SchemaError("subnets must match the architecture's groups one to one")
        for g in self.arch.groups:
            if self.subnets[group_label(g)].input_dim != len(g):
                raise SchemaError(f"subnet for {group_label(g)!r} has wrong input dimension")

    @property
    def n_features(self) -> int:
        return len(self.schema)

    def columns(self, group: Sequence[str]) -> list[int]:
        return [self.schema.index(n) for n in group]

    def subnet(self, label: str) -> SubnetParams:
        try:
            return self.subnets[label]
        except KeyError:
            raise SchemaError(f"unknown group {label!r}") from None

    # flat parameter vector: subnets in arch order, intercept last
    def flat_params(self) -> np.ndarray:
        parts = [dc.flatten_params(self.subnets[lbl]) for lbl in self.arch.labels]
        return np.concatenate([*parts, [self.intercept]])

    def param_slices(self) -> dict[str, slice]:
        out, pos = {}, 0
        for lbl in self.arch.labels:
            n = self.subnets[lbl].n_params
            out[lbl] = slice(pos, pos + n)
            pos += n
        out["intercept"] = slice(pos, pos + 1)
        return out

    def with_flat_params(self, vec: np.ndarray) -> "GroveModel":
        subnets = {}
        for g, (lbl, sl) in zip(self.arch.groups, self.param_slices().items()):
            old = self.subnets[lbl]
            subnets[lbl] = dc.unflatten(vec[sl], len(g), old.hidden_sizes, old.hidden_activation)
        return replace(self, intercept=float(vec[-1]), subnets=subnets)


def init_model(
    arch: GroveArchitecture,
    schema: FeatureSchema,
    task: str,
    rng: np.random.Generator,
    intercept: float = 0.0,
) -> GroveModel:
    subnets = {
        group_label(g): dc.init_params(len(g), arch.hidden_for(g), rng) for g in arch.groups
    }
    return GroveModel(float(intercept), subnets, arch, schema, task)


def zero_model(arch: GroveArchitecture, schema: FeatureSchema, task: str = "regression", intercept=0.0):
    subnets = {group_label(g): dc.zeros(len(g), arch.hidden_for(g)) for g in arch.groups}
    return GroveModel(float(intercept), subnets, arch, schema, task)


def _check_x(model: GroveModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(f"expected {model.n_features} features, got shape {X.shape}")
    return X


def scores(model: GroveModel, X) -> np.ndarray:
    """f(x) for every row of ``X``."""
    X = _check_x(model, X)
    out = np.full(X.shape[0], model.intercept)
    for g in model.arch.groups:
        out += dc.forward(model.subnets[group_label(g)], X[:, model.columns(g)])
    return out


def probabilities(model: GroveModel, X) -> np.ndarray:
    return dc.logistic(scores(model, X))


def predict(model: GroveModel, x) -> Prediction:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SchemaError("predict takes one input vector; use scores() for batches")
    s = float(scores(model, x)[0])
    if model.task == "binary_classification":
        return Prediction(s, float(dc.logistic(np.array([s]))[0]))
    return Prediction(s)


def subnet_contribution(model: GroveModel, group: str, x_slice) -> float:
    net = model.subnet(group)
    x_slice = np.atleast_1d(np.asarray(x_slice, dtype=float))
    if x_slice.shape != (net.input_dim,):
        raise SchemaError(f"group {group!r} takes {net.input_dim} inputs, got {x_slice.shape}")
    return dc.evaluate(net, x_slice)


def contributions(model: GroveModel, group: str, points) -> np.ndarray:
    """Batch version of :func:`subnet_contribution`; ``points`` is (n, k)."""
    return dc.forward(model.subnet(group), points)


def input_partials(model: GroveModel, x) -> np.ndarray:
    """df/dx; a batch input returns one gradient row per sample."""
    x = np.asarray(x, dtype=float)
    X = _check_x(model, x)
    out = np.zeros_like(X)
    for g in model.arch.groups:
        cols = model.columns(g)
        _, ig = dc.value_and_input_grad(model.subnets[group_label(g)], X[:, cols])
        out[:, cols] = ig
    return out[0] if x.ndim == 1 else out


def centered(model: GroveModel, anchor: dict | None = None) -> GroveModel:
    """Shift every subnet to be 0 at its anchor point, moving the offset into the intercept.

    The anchor defaults to each feature's domain minimum.  Derivatives and
    total scores are unchanged.
    """
    anchor = anchor or {}
    subnets, offsets, intercept = {}, dict(model.centering), model.intercept
    for g in model.arch.groups:
        lbl = group_label(g)
        point = np.array([anchor.get(n, model.schema[n].lo) for n in g], dtype=float)
        off = dc.evaluate(model.subnets[lbl], point)
        subnets[lbl] = model.subnets[lbl].with_output_shift(-off)
        offsets[lbl] = offsets.get(lbl, 0.0) + off
        intercept += off
    return replace(model, intercept=intercept, subnets=subnets, centering=offsets)


def to_dict(model: GroveModel, extra: dict | None = None) -> dict:
    d = {
        "format_version": FORMAT_VERSION,
        "task": model.task,
        "intercept": model.intercept,
        "features": model.schema.to_dict(),
        "architecture": model.arch.to_dict(),
        "subnets": {
            lbl: {
                "hidden": list(model.subnets[lbl].hidden_sizes),
                "activation": model.subnets[lbl].hidden_activation,
                "params": dc.flatten_params(model.subnets[lbl]).tolist(),
            }
            for lbl in model.arch.labels
        },
        "centering": {k: model.centering[k] for k in sorted(model.centering)},
    }
    if extra:
        d.update(extra)
    return d


def from_dict(d: dict) -> GroveModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported model format_version {d.get('format_version')!r}")
    schema = FeatureSchema.from_dict(d["features"])
    arch = GroveArchitecture.from_dict(d["architecture"])
    subnets = {}
    for g in arch.groups:
        lbl = group_label(g)
        s = d["subnets"][lbl]
        subnets[lbl] = dc.unflatten(np.array(s["params"], dtype=float), len(g), tuple(s["hidden"]), s.get("activation", "logistic"))
    return GroveModel(float(d["intercept"]), subnets, arch, schema, d["task"], dict(d.get("centering", {})))


def dumps(model: GroveModel, extra: dict | None = None) -> str:
    return json.dumps(to_dict(model, extra), indent=2, sort_keys=True) + "\n"
