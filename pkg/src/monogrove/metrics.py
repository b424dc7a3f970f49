"""Classification error, AUC, log-loss and MSE."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetric(ValueError):
    pass


@dataclass(frozen=True)
class MetricSet:
    classification_error: float | None = None
    auc: float | None = None
    logloss: float | None = None
    mse: float | None = None
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0:
        raise UndefinedMetric("empty input")
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def classification_error(probs, labels, threshold: float = 0.5) -> float:
    """Share of samples where ``prob >= threshold`` disagrees with the label."""
    p, y = _pair(probs, labels)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return float(np.mean((p >= threshold) != (y == 1)))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC from midranks; ties between classes count one half."""
    s, y = _pair(scores, labels)
    pos = y == 1
    n1 = int(pos.sum())
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedMetric("AUC needs both classes")
    ranks = rankdata(s, method="average")
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def logloss(probs, labels, clip: float = 1e-15) -> float:
    p, y = _pair(probs, labels)
    p = np.clip(p, clip, 1 - clip)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def mse(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.mean((p - t) ** 2))


def metric_set(scores, y, task: str) -> MetricSet:
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=float)
    if task == "regression":
        return MetricSet(mse=mse(scores, y), n=int(y.size))
    probs = 1.0 / (1.0 + np.exp(-scores))
    try:
        a = auc(scores, y)
    except UndefinedMetric:
        a = None
    return MetricSet(classification_error(probs, y), a, logloss(probs, y), n=int(y.size))
