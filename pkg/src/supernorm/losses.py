"""Mean-reduced training losses as fused tape operations."""

import numpy as np

from .autodiff import DiffMatrix, _record, as_matrix
from .exceptions import DimensionError


def binary_cross_entropy(logits, targets) -> DiffMatrix:
    """BCE on raw logits, ``mean(softplus(z) - y * z)``."""
    z = as_matrix(logits)
    y = np.asarray(targets, dtype=np.float64).reshape(z.shape)
    zv = z.values
    # log(1 + exp(z)) without overflow
    softplus = np.maximum(zv, 0.0) + np.log1p(np.exp(-np.abs(zv)))
    n = zv.size
    sig = 0.5 * (1.0 + np.tanh(0.5 * zv))
    value = np.array([[np.sum(softplus - y * zv) / n]])
    return _record(value, (z,), lambda g: (g[0, 0] * (sig - y) / n,))


def log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, classes) -> DiffMatrix:
    z = as_matrix(logits)
    c = np.asarray(classes, dtype=np.int64).reshape(-1)
    if c.shape[0] != z.rows:
        raise DimensionError(f"{z.rows} logit rows but {c.shape[0]} class labels")
    logp = log_softmax(z.values)
    n = z.rows
    rows = np.arange(n)
    value = np.array([[-logp[rows, c].mean()]])

    def back(g):
        d = np.exp(logp)
        d[rows, c] -= 1.0
        return (g[0, 0] * d / n,)

    return _record(value, (z,), back)


def mean_absolute_error(pred, target) -> DiffMatrix:
    p = as_matrix(pred)
    t = np.asarray(target, dtype=np.float64).reshape(p.shape)
    diff = p.values - t
    n = diff.size
    return _record(
        np.array([[np.abs(diff).sum() / n]]), (p,), lambda g: (g[0, 0] * np.sign(diff) / n,)
    )
