"""External logistic-regression classifier and evaluation metrics.

After network training the final decision comes from a logistic
regression fitted directly on the LR-layer input vectors (the per-block
similarity scores plus extras).  Fitting minimizes L2-regularized mean
cross-entropy (bias unregularized) with a deterministic full-batch
quasi-Newton optimizer run to gradient-norm tolerance 1e-6, multinomial
when three classes are present; identical inputs produce bit-identical
models.

Ranking quality is measured by MAP and MRR over per-question candidate
groups, sorted by score descending with ties kept in original order;
classification by accuracy and positive-class F1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .autodiff import sigmoid
from .errors import DimensionError

__all__ = [
    "LogisticModel",
    "fit_logistic",
    "predict_scores",
    "predict_labels",
    "RankingGroup",
    "mean_average_precision",
    "mean_reciprocal_rank",
    "accuracy_f1",
]

_OPTIONS = {"gtol": 1e-6, "ftol": 1e-16, "maxiter": 20000, "maxcor": 20}


@dataclass
class LogisticModel:
    """Fitted weights; binary models store one weight row for the second class."""

    classes: list[int]
    weights: np.ndarray  # (1, F) binary, (C, F) multinomial
    bias: np.ndarray  # (1,) or (C,)
    l2: float

    @property
    def feature_width(self) -> int:
        return self.weights.shape[1]


def _binary_objective(x_mat, y, l2):
    n, width = x_mat.shape

    def fun(theta):
        w, b = theta[:width], theta[width]
        z = x_mat @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + l2 * float(w @ w)
        dz = (sigmoid(z) - y) / n
        grad = np.concatenate([x_mat.T @ dz + 2.0 * l2 * w, [dz.sum()]])
        return loss, grad

    return fun, np.zeros(width + 1)


def _multinomial_objective(x_mat, y_idx, n_classes, l2):
    n, width = x_mat.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_idx] = 1.0

    def fun(theta):
        w = theta[: n_classes * width].reshape(n_classes, width)
        b = theta[n_classes * width :]
        z = x_mat @ w.T + b
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        loss = float(np.mean(lse - z[np.arange(n), y_idx])) + l2 * float(
            np.sum(w * w)
        )
        probs = np.exp(z - lse[:, None])
        delta = (probs - onehot) / n
        grad_w = delta.T @ x_mat + 2.0 * l2 * w
        return loss, np.concatenate([grad_w.reshape(-1), delta.sum(axis=0)])

    return fun, np.zeros(n_classes * (width + 1))


def fit_logistic(features, labels, l2: float = 1e-4) -> LogisticModel:
    """Fit L2-regularized logistic regression (multinomial for 3 classes)."""
    x_mat = np.asarray(features, dtype=np.float64)
    if x_mat.ndim != 2:
        raise DimensionError("feature matrix must be 2-D")
    if not np.all(np.isfinite(x_mat)):
        raise ValueError("feature matrix contains non-finite values")
    labels = [int(v) for v in labels]
    if len(labels) != x_mat.shape[0]:
        raise DimensionError("labels length does not match feature rows")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("need at least two classes to fit a classifier")
    if len(classes) == 2:
        y = np.array([1.0 if v == classes[1] else 0.0 for v in labels])
        fun, x0 = _binary_objective(x_mat, y, l2)
        result = minimize(fun, x0, jac=True, method="L-BFGS-B", options=_OPTIONS)
        theta = result.x
        width = x_mat.shape[1]
        return LogisticModel(
            classes=classes,
            weights=theta[:width].reshape(1, width),
            bias=theta[width:].copy(),
            l2=l2,
        )
    index = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([index[v] for v in labels])
    fun, x0 = _multinomial_objective(x_mat, y_idx, len(classes), l2)
    result = minimize(fun, x0, jac=True, method="L-BFGS-B", options=_OPTIONS)
    width = x_mat.shape[1]
    n_classes = len(classes)
    return LogisticModel(
        classes=classes,
        weights=result.x[: n_classes * width].reshape(n_classes, width),
        bias=result.x[n_classes * width :].copy(),
        l2=l2,
    )


def predict_scores(model: LogisticModel, features) -> np.ndarray:
    """Per-row class probabilities, in ``model.classes`` order, summing to 1."""
    x_mat = np.asarray(features, dtype=np.float64)
    if x_mat.ndim != 2 or x_mat.shape[1] != model.feature_width:
        raise DimensionError(
            f"feature width {x_mat.shape} does not match model width "
            f"{model.feature_width}"
        )
    if len(model.classes) == 2:
        p = sigmoid(x_mat @ model.weights[0] + model.bias[0])
        return np.column_stack([1.0 - p, p])
    z = x_mat @ model.weights.T + model.bias
    zmax = z.max(axis=1, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=1, keepdims=True)


def predict_labels(model: LogisticModel, features) -> list[int]:
    scores = predict_scores(model, features)
    return [model.classes[i] for i in np.argmax(scores, axis=1)]


@dataclass
class RankingGroup:
    """Scored candidates of one question; at least one must be relevant."""

    group_id: str
    items: list[tuple[float, bool]]  # (score, relevant)


def _ranked_relevance(group: RankingGroup) -> list[bool]:
    if not any(rel for _, rel in group.items):
        raise ValueError(f"ranking group {group.group_id!r} has no relevant item")
    order = sorted(
        range(len(group.items)), key=lambda i: (-group.items[i][0], i)
    )
    return [group.items[i][1] for i in order]


def mean_average_precision(groups: list[RankingGroup]) -> float:
    """Mean over groups of the average precision at each relevant rank."""
    if not groups:
        raise ValueError("no ranking groups to evaluate")
    total = 0.0
    for group in groups:
        ranked = _ranked_relevance(group)
        hits = 0
        ap = 0.0
        for rank, relevant in enumerate(ranked, start=1):
            if relevant:
                hits += 1
                ap += hits / rank
        total += ap / hits
    return total / len(groups)


def mean_reciprocal_rank(groups: list[RankingGroup]) -> float:
    """Mean over groups of 1 / (rank of the first relevant item)."""
    if not groups:
        raise ValueError("no ranking groups to evaluate")
    total = 0.0
    for group in groups:
        ranked = _ranked_relevance(group)
        total += 1.0 / (ranked.index(True) + 1)
    return total / len(groups)


def accuracy_f1(predictions, labels, positive: int = 1) -> tuple[float, float]:
    """Accuracy plus F1 of the positive class (binary tasks).

    F1 is 0 when precision and recall are both zero.  Three-class tasks
    report accuracy only; the F1 value is meaningful for binary labels.
    """
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise DimensionError("predictions and labels differ in length")
    if not labels:
        raise ValueError("nothing to evaluate")
    correct = sum(1 for p, y in zip(predictions, labels) if p == y)
    tp = sum(1 for p, y in zip(predictions, labels) if p == positive == y)
    fp = sum(1 for p, y in zip(predictions, labels) if p == positive != y)
    fn = sum(1 for p, y in zip(predictions, labels) if y == positive != p)
    if tp == 0:
        f1 = 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 2.0 * precision * recall / (precision + recall)
    return correct / len(labels), f1
