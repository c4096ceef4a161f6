"""Linear SVM trained by deterministic epoch-based Pegasos subgradient steps.

Objective: ``0.5*||w||^2 + c * sum_i hinge(y_i * (w.x_i + b))``, which is
Pegasos with ``lambda = 1 / (c * n)`` on the mean hinge loss. The bias is
handled as a weight on a constant feature (so it is regularized too, which
keeps the 1/(lambda*t) steps stable).

The returned weights are the average of the iterates over the second half
of the epochs (suffix averaging); the last iterate of 1/(lambda*t) steps
is far noisier when lambda is small.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateLabelsError, DimensionError

NORMAL, ABNORMAL = -1, 1


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    feature_kind: str
    mean: np.ndarray
    scale: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def feature_dim(self) -> int:
        return self.weights.size

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_dim:
            raise DimensionError(f"model expects {self.feature_dim} features, got {X.shape[1]}")
        return self.standardize(X) @ self.weights + self.bias


def zscore_stats(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def svm_train(X, y, c: float = 1.0, epochs: int = 20, seed: int = 0, feature_kind: str = "") -> LinearModel:
    """Fit a linear SVM on ``X`` [n, d] with labels in {-1, +1}.

    Features are z-scored with training statistics that are stored in the
    returned model. Sample order within each epoch is a seeded permutation,
    so results are reproducible.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DimensionError("X must be a [n, d] matrix")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"need one label per row: X has {X.shape[0]} rows, y has shape {y.shape}")
    if not np.all(np.isin(y, (NORMAL, ABNORMAL))):
        raise DegenerateLabelsError("labels must be -1 or +1")
    if X.shape[0] < 2 or np.unique(y).size < 2:
        raise DegenerateLabelsError("training data must contain both classes")
    n, d = X.shape
    mean, scale = zscore_stats(X)
    Z = np.hstack([(X - mean) / scale, np.ones((n, 1))])
    yf = y.astype(np.float64)
    lam = 1.0 / (c * n)
    rng = np.random.Generator(np.random.PCG64(seed))
    w = np.zeros(d + 1)
    w_sum = np.zeros(d + 1)
    n_sum = 0
    first_avg_epoch = epochs // 2
    t = 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = yf[i] * (Z[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * yf[i] * Z[i]
            if epoch >= first_avg_epoch:
                w_sum += w
                n_sum += 1
    w_avg = w_sum / n_sum
    return LinearModel(w_avg[:d].copy(), float(w_avg[d]), feature_kind, mean, scale)


def svm_predict(m: LinearModel, x) -> int:
    """Label for one feature vector: +1 abnormal, -1 normal (ties are normal)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("svm_predict takes one feature vector")
    return ABNORMAL if m.decision_function(x)[0] > 0 else NORMAL


def svm_predict_many(m: LinearModel, X) -> np.ndarray:
    return np.where(m.decision_function(X) > 0, ABNORMAL, NORMAL)
