from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import InvalidDistribution, ShapeMismatch
from .ingest import WeightMap, weight_vector

EPSILON = 1e-7
ROW_SUM_TOL = 1e-6


def weighted_categorical_cross_entropy(
    targets: np.ndarray,
    probs: np.ndarray,
    weights: WeightMap | Sequence[float] | None = None,
) -> float:
    """Mean over rows of ``w[true] * -log(clip(p[true], 1e-7, 1))``.

    ``targets`` are one-hot rows and ``probs`` probability rows summing to 1.
    """
    t = np.asarray(targets, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    t, p = np.atleast_2d(t), np.atleast_2d(p)
    if t.shape != p.shape or t.ndim != 2:
        raise ShapeMismatch(f"targets {t.shape} vs probs {p.shape}")
    if not np.all((t == 0) | (t == 1)) or not np.all(t.sum(axis=1) == 1):
        raise ShapeMismatch("targets must be one-hot rows")
    if np.any(p < 0) or np.any(p > 1) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise InvalidDistribution("each probability row must lie in [0, 1] and sum to 1")
    w = np.ones(t.shape[1]) if weights is None else weight_vector(weights)
    if w.shape != (t.shape[1],):
        raise ShapeMismatch(f"{w.shape[0]} class weights for {t.shape[1]} classes")
    true_class = t.argmax(axis=1)
    p_true = np.clip(p[np.arange(len(p)), true_class], EPSILON, 1.0)
    return float(np.mean(w[true_class] * -np.log(p_true)))


def keras_weighted_cce(weights: WeightMap | Sequence[float] | None, num_classes: int = 3):
    """The same loss as a keras-compatible per-sample function (mean taken by keras)."""
    from keras import ops

    w = np.ones(num_classes, dtype="float32") if weights is None else weight_vector(weights).astype("float32")

    def weighted_cce(y_true, y_pred):
        y_true = ops.cast(y_true, y_pred.dtype)
        p_true = ops.clip(ops.sum(y_true * y_pred, axis=-1), EPSILON, 1.0)
        w_true = ops.sum(y_true * ops.convert_to_tensor(w, dtype=y_pred.dtype), axis=-1)
        return -w_true * ops.log(p_true)

    return weighted_cce
