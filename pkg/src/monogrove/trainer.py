"""Penalized training with lambda escalation.

``fit`` starts with all penalty weights at zero, trains a round, audits the
penalties at ``eps=0`` on the audit grid, raises the weight of every
penalty that is still positive, and retrains (warm-started by default)
until every penalty vanishes or ``max_rounds`` is reached.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diffcore as dc
from . import grove
from .grove import GroveModel
from .penalty import DEFAULT_POINTS_1D, DEFAULT_POINTS_GROUP, Penalties, PenaltyGrid
from .schema import FeatureSchema, GroveArchitecture, MonotoneSpec, validate

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "momentum", "adam")


class TrainingDivergence(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"training diverged at step {step} (objective={value})")
        self.step = step
        self.value = value


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs_per_round: int = 500
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    lambda_init: float = 1.0
    lambda_factor: float = 10.0
    max_rounds: int = 8
    epsilon: float = 1e-3
    margin: float = 1e-2
    optimizer: str = "adam"
    warm_start: bool = True
    class_weight: tuple[float, float] | None = None
    grid_points_1d: int = DEFAULT_POINTS_1D
    grid_points_group: int = DEFAULT_POINTS_GROUP
    audit_factor: int = 4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.lambda_factor <= 1:
            raise ValueError("lambda_factor must be > 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.epochs_per_round < 0:
            raise ValueError("epochs_per_round must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.epsilon < 0 or self.margin < 0:
            raise ValueError("epsilon and margin must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_weight"] = list(self.class_weight) if self.class_weight else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("class_weight") is not None:
            d["class_weight"] = tuple(d["class_weight"])
        return cls(**d)


@dataclass
class RoundRecord:
    round: int
    lambdas: tuple[float, float, float]
    loss: float
    h: tuple[float, float, float]  # at eps=0 on the audit grid


@dataclass
class TrainTrace:
    rounds: list[RoundRecord] = field(default_factory=list)
    certified: bool = False

    @property
    def final_h(self) -> tuple[float, float, float]:
        return self.rounds[-1].h if self.rounds else (0.0, 0.0, 0.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "lambda1", "lambda2", "lambda3", "loss", "h1", "h2", "h3"])
        for r in self.rounds:
            w.writerow([r.round, *map(repr, r.lambdas), repr(r.loss), *map(repr, r.h)])
        return buf.getvalue()


def _weights(y: np.ndarray, class_weight) -> np.ndarray | None:
    if class_weight is None:
        return None
    w0, w1 = class_weight
    return np.where(y > 0.5, w1, w0)


def loss(model: GroveModel, X, y, task: str | None = None, class_weight=None):
    """Mean squared error (regression) or mean Bernoulli NLL (classification).

    Returns ``(value, gradient over model.flat_params())``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty data")
    if np.isnan(X).any() or np.isnan(y).any():
        raise ValueError("NaN in training data")
    task = task or model.task
    s = grove.scores(model, X)
    w = _weights(y, class_weight)
    n = X.shape[0]
    if task == "regression":
        resid = s - y
        with np.errstate(over="ignore"):  # overflow surfaces as TrainingDivergence
            per = resid * resid
        dper = 2.0 * resid
    else:
        # -[y log p + (1-y) log(1-p)] with p = logistic(s)
        per = np.logaddexp(0.0, s) - y * s
        dper = dc.logistic(s) - y
    if w is not None:
        per, dper = per * w, dper * w
    value = float(per.sum() / n)
    cot = dper / n
    grad = np.zeros(model.flat_params().shape)
    slices = model.param_slices()
    for g in model.arch.groups:
        lbl = "+".join(g)
        grad[slices[lbl]] = dc.vjp(model.subnets[lbl], X[:, model.columns(g)], cot)
    grad[-1] = cot.sum()
    return value, grad


class _Optimizer:
    def __init__(self, kind: str, lr: float, size: int):
        self.kind, self.lr = kind, lr
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        if self.kind == "sgd":
            return theta - self.lr * grad
        if self.kind == "momentum":
            self.m = 0.9 * self.m + grad
            return theta - self.lr * self.m
        b1, b2 = 0.9, 0.999
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        mhat = self.m / (1 - b1**self.t)
        vhat = self.v / (1 - b2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + 1e-8)


def train_round(
    model: GroveModel,
    X,
    y,
    penalties: Penalties | None,
    lambdas,
    config: TrainConfig,
    round_index: int = 0,
    history: list | None = None,
) -> GroveModel:
    """Run ``epochs_per_round`` optimizer epochs on loss + sum(lambda_i * h_i)."""
    lambdas = np.asarray(lambdas, dtype=float)
    if (lambdas < 0).any():
        raise ValueError("lambdas must be >= 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    use_pen = penalties is not None and len(penalties) and lambdas.any()
    theta = model.flat_params()
    opt = _Optimizer(config.optimizer, config.learning_rate, theta.size)
    n = X.shape[0]
    rng = np.random.default_rng([config.seed, round_index])
    step = 0
    for _ in range(config.epochs_per_round):
        if config.batch_size is None or config.batch_size >= n:
            batches = [slice(None)]
        else:
            order = rng.permutation(n)
            batches = [order[i : i + config.batch_size] for i in range(0, n, config.batch_size)]
        for idx in batches:
            value, grad = loss(model, X[idx], y[idx], class_weight=config.class_weight)
            if use_pen:
                rep, pgrad = penalties.evaluate(model, config.epsilon, config.margin, lambdas, want_grad=True)
                value += float(np.dot(lambdas, rep.values))
                grad = grad + pgrad
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingDivergence(step, value)
            if history is not None:
                history.append(value)
            theta = opt.step(theta, grad)
            model = model.with_flat_params(theta)
            step += 1
    return model


def fit(
    data,
    schema: FeatureSchema,
    spec: MonotoneSpec,
    arch: GroveArchitecture,
    config: TrainConfig = TrainConfig(),
    task: str | None = None,
    init: GroveModel | None = None,
) -> tuple[GroveModel, TrainTrace]:
    """Train a grove model under ``spec``.

    ``data`` is an object with ``X``/``y`` attributes (a ``Dataset``) or an
    ``(X, y)`` tuple.  The returned model is centered (each subnet is zero at
    its domain minimum).  ``trace.certified`` is False when penalties were
    still positive after ``max_rounds``.
    """
    X, y = (data.X, data.y) if hasattr(data, "X") else data
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    task = task or getattr(data, "task", None) or "regression"
    spec.check(schema)
    problems = validate(spec, arch, schema)
    if problems:
        raise ValueError("architecture does not satisfy the constraints: " + "; ".join(p.message for p in problems))

    grid = PenaltyGrid(schema, arch, config.grid_points_1d, config.grid_points_group)
    penalties = Penalties(spec, grid) if not spec.is_empty else None
    audit = Penalties(spec, grid.audit(config.audit_factor)) if penalties else None

    def fresh():
        rng = np.random.default_rng(config.seed)
        base = y.mean() if task == "regression" else np.log((y.mean() + 1e-12) / (1 - y.mean() + 1e-12))
        return grove.init_model(arch, schema, task, rng, intercept=float(base))

    model = init if init is not None else fresh()
    lambdas = np.zeros(3)
    trace = TrainTrace()
    for r in range(config.max_rounds):
        if r > 0 and not config.warm_start:
            model = fresh()
        model = train_round(model, X, y, penalties, lambdas, config, round_index=r)
        ell, _ = loss(model, X, y, class_weight=config.class_weight)
        h = audit.evaluate(model).values if audit else (0.0, 0.0, 0.0)
        trace.rounds.append(RoundRecord(r, tuple(float(v) for v in lambdas), ell, tuple(h)))
        log.info("round %d lambdas=%s loss=%.6g h=%s", r, lambdas.tolist(), ell, h)
        if not any(v > 0 for v in h):
            trace.certified = True
            break
        for i, v in enumerate(h):
            if v > 0:
                lambdas[i] = max(config.lambda_init, lambdas[i] * config.lambda_factor)
    return grove.centered(model), trace


def with_config(config: TrainConfig, **changes) -> TrainConfig:
    return replace(config, **changes)
