"""Closed-form derivatives for shallow logistic subnets.

A subnet maps ``x in R^d`` to a scalar through one or two logistic hidden
layers and an affine output head.  Besides the value we need the input
gradient ``df/dx`` and, for the monotonicity penalties, the parameter
gradient of every input-gradient component.  All of these are computed by a
forward pass that carries input tangents, followed by a reverse pass over
both the primal and tangent streams.

Parameter flattening order is layer-major (hidden layers first, output head
last); within a layer the weight matrix comes first in row-major order
(shape ``(fan_out, fan_in)``), followed by the bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("logistic", "identity")  # identity gives exactly linear subnets


class SchemaError(ValueError):
    """Input or parameter shapes are inconsistent."""


@dataclass(frozen=True)
class SubnetParams:
    """Weights and biases of one subnet; the last layer is the scalar head."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    hidden_activation: str = "logistic"

    def __post_init__(self):
        if self.hidden_activation not in ACTIVATIONS:
            raise SchemaError(f"unsupported activation {self.hidden_activation!r}")
        if len(self.weights) != len(self.biases):
            raise SchemaError("weights and biases must have the same number of layers")
        if len(self.weights) not in (2, 3):
            raise SchemaError("subnets have 1 or 2 hidden layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise SchemaError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise SchemaError(f"layer {i} does not chain from layer {i - 1}")
            if w.shape[0] < 1:
                raise SchemaError("layer widths must be >= 1")
        if self.weights[-1].shape[0] != 1:
            raise SchemaError("output head must be scalar")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def n_params(self) -> int:
        return param_count(self.input_dim, self.hidden_sizes)

    def with_output_shift(self, delta: float) -> "SubnetParams":
        """Same network with ``delta`` added to the output bias."""
        biases = list(self.biases)
        biases[-1] = biases[-1] + delta
        return SubnetParams(self.weights, tuple(biases), self.hidden_activation)


@dataclass(frozen=True)
class EvalRecord:
    value: float
    input_grad: np.ndarray  # (d,)
    param_grad_of_value: np.ndarray  # (P,)
    param_grad_of_input_grad: np.ndarray  # (d, P)


def _layer_shapes(d: int, hidden: Sequence[int]) -> list[tuple[int, int]]:
    sizes = [d, *hidden, 1]
    return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]


def param_count(d: int, hidden: Sequence[int]) -> int:
    return sum(o * i + o for o, i in _layer_shapes(d, hidden))


def zeros(d: int, hidden: Sequence[int] = (2,)) -> SubnetParams:
    shapes = _layer_shapes(d, hidden)
    return SubnetParams(
        tuple(np.zeros(s) for s in shapes), tuple(np.zeros(s[0]) for s in shapes)
    )


def init_params(d: int, hidden: Sequence[int], rng: np.random.Generator) -> SubnetParams:
    """Glorot-normal weights, zero biases."""
    ws, bs = [], []
    for fan_out, fan_in in _layer_shapes(d, hidden):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        ws.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return SubnetParams(tuple(ws), tuple(bs))


def flatten_params(params: SubnetParams) -> np.ndarray:
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten(vec: np.ndarray, d: int, hidden: Sequence[int], activation: str = "logistic") -> SubnetParams:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (param_count(d, hidden),):
        raise SchemaError(
            f"expected {param_count(d, hidden)} parameters for d={d}, hidden={tuple(hidden)}, "
            f"got shape {vec.shape}"
        )
    ws, bs, pos = [], [], 0
    for fan_out, fan_in in _layer_shapes(d, hidden):
        n = fan_out * fan_in
        ws.append(vec[pos : pos + n].reshape(fan_out, fan_in).copy())
        pos += n
        bs.append(vec[pos : pos + fan_out].copy())
        pos += fan_out
    return SubnetParams(tuple(ws), tuple(bs), activation)


def logistic(z):
    return expit(np.asarray(z, dtype=float))


def _activate(kind: str, z: np.ndarray):
    """Activation value with its first and second derivatives."""
    if kind == "identity":
        return z, np.ones_like(z), np.zeros_like(z)
    s = logistic(z)
    s1 = s * (1.0 - s)
    return s, s1, s1 * (1.0 - 2.0 * s)


def _as_batch(params: SubnetParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise SchemaError(f"input has shape {X.shape}, subnet expects dimension {params.input_dim}")
    return X


def forward(params: SubnetParams, X) -> np.ndarray:
    """Values for a batch ``X`` of shape (n, d)."""
    a = _as_batch(params, X)
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = _activate(params.hidden_activation, a @ w.T + b)[0]
    return a @ params.weights[-1][0] + params.biases[-1][0]


def evaluate(params: SubnetParams, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SchemaError("evaluate takes a single input vector")
    return float(forward(params, x)[0])


class _Tape:
    """Forward pass with input tangents; cached for the reverse sweep."""

    def __init__(self, params: SubnetParams, X: np.ndarray, tangents: bool = True):
        n, d = X.shape
        self.params = params
        self.layers = []
        a = X
        t = np.broadcast_to(np.eye(d), (n, d, d)) if tangents else None
        for li, (w, b) in enumerate(zip(params.weights[:-1], params.biases[:-1])):
            z = a @ w.T + b
            s, s1, s2 = _activate(params.hidden_activation, z)
            if not tangents:
                tz = None
            elif li == 0:
                tz = np.broadcast_to(w.T, (n, d, w.shape[0]))  # identity seed: dz/dx = W^T
            else:
                tz = t @ w.T
            self.layers.append((a, t, tz, s1, s2))
            a = s
            t = s1[:, None, :] * tz if tangents else None
        w_out = params.weights[-1][0]
        self.a_last, self.t_last = a, t
        self.value = a @ w_out + params.biases[-1][0]
        self.input_grad = t @ w_out if tangents else None

    def backward(self, cot_value: np.ndarray, cot_grad: np.ndarray | None, reduce: bool):
        """Reverse sweep for cotangents on the value and on the input gradient.

        ``cot_value`` has shape (n, S) and ``cot_grad`` (n, S, d); S independent
        seeds are carried together.  With ``reduce`` the parameter gradients are
        summed over samples and seeds and returned flat (P,); otherwise they
        are returned per seed with shape (n, S, P).
        """
        params = self.params
        out = "" if reduce else "ns"
        w_out = params.weights[-1][0]
        use_t = cot_grad is not None

        gw = np.einsum(f"ns,nh->{out}h", cot_value, self.a_last)
        if use_t:
            gw = gw + np.einsum(f"nsj,njh->{out}h", cot_grad, self.t_last)
        gb = cot_value.sum() if reduce else cot_value
        grads = [(gw[..., None, :], np.reshape(gb, (*gb.shape, 1)) if not reduce else np.array([gb]))]

        A = cot_value[..., None] * w_out  # (n,S,H)
        T = cot_grad[..., None] * w_out if use_t else None  # (n,S,d,H)
        for li in range(len(self.layers) - 1, -1, -1):
            a_prev, t_prev, tz, s1, s2 = self.layers[li]
            w = params.weights[li]
            Z = A * s1[:, None, :]
            if use_t:
                Z = Z + s2[:, None, :] * np.einsum("nsjh,njh->nsh", T, tz)
                TZ = T * s1[:, None, None, :]
            gw = np.einsum(f"nsh,nk->{out}hk", Z, a_prev)
            if use_t:
                gw = gw + np.einsum(f"nsjh,njk->{out}hk", TZ, t_prev)
            gb = Z.sum(axis=(0, 1)) if reduce else Z
            grads.append((gw, gb))
            if li > 0:
                A = Z @ w
                T = TZ @ w if use_t else None

        grads.reverse()
        if reduce:
            return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
        n, S = cot_value.shape
        return np.concatenate(
            [np.concatenate([gw.reshape(n, S, -1), gb], axis=2) for gw, gb in grads], axis=2
        )


def tape(params: SubnetParams, X) -> _Tape:
    """Forward pass kept for a later :meth:`_Tape.backward` (avoids recomputation)."""
    return _Tape(params, _as_batch(params, X))


def value_and_input_grad(params: SubnetParams, X) -> tuple[np.ndarray, np.ndarray]:
    """Batch values (n,) and input gradients (n, d)."""
    tape = _Tape(params, _as_batch(params, X))
    return tape.value, tape.input_grad


def eval_full(params: SubnetParams, x) -> EvalRecord:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SchemaError("eval_full takes a single input vector")
    grads, values, ig = full_jacobians(params, x[None, :])
    return EvalRecord(
        value=float(values[0]),
        input_grad=ig[0],
        param_grad_of_value=grads[0, 0],
        param_grad_of_input_grad=grads[0, 1:],
    )


def full_jacobians(params: SubnetParams, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample parameter Jacobians of the value and of each input partial.

    Returns ``(J, values, input_grads)`` where ``J`` has shape (n, 1+d, P):
    row 0 is d f/d theta, row 1+j is d(df/dx_j)/d theta.
    """
    X = _as_batch(params, X)
    n, d = X.shape
    tape = _Tape(params, X)
    seeds_v = np.zeros((n, d + 1))
    seeds_v[:, 0] = 1.0
    seeds_g = np.zeros((n, d + 1, d))
    seeds_g[:, 1:, :] = np.eye(d)
    return tape.backward(seeds_v, seeds_g, reduce=False), tape.value, tape.input_grad


def vjp(params: SubnetParams, X, cot_value=None, cot_grad=None) -> np.ndarray:
    """Summed parameter gradient of ``sum(cot_value * f) + sum(cot_grad * df/dx)``."""
    X = _as_batch(params, X)
    n, d = X.shape
    tape = _Tape(params, X, tangents=cot_grad is not None)
    cv = np.zeros((n, 1)) if cot_value is None else np.asarray(cot_value, float).reshape(n, 1)
    cg = None if cot_grad is None else np.asarray(cot_grad, float).reshape(n, 1, d)
    return tape.backward(cv, cg, reduce=True)
