"""Masked losses. Each returns ``(loss, grad)`` with ``grad`` shaped like ``predicted``.

Masked-out cells contribute neither to the loss nor to its normaliser and
receive zero gradient.
"""

import numpy as np

from .errors import ShapeError

EPS = 1e-7


def _weights(predicted, mask):
    if mask is None:
        w = np.ones(predicted.shape)
    else:
        w = np.broadcast_to(np.asarray(mask, dtype=float), predicted.shape).astype(float)
    n = w.sum()
    if n <= 0:
        raise ValueError("every cell is masked out; the loss is undefined")
    return w, n


def bce_loss(predicted, actual, mask=None):
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(actual, dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"predicted {p.shape} and actual {y.shape} differ")
    w, n = _weights(p, mask)
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = -(w * (y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))).sum() / n
    grad = w * ((1.0 - y) / (1.0 - pc) - y / pc) / n
    return float(loss), grad


def mse_loss(predicted, actual, mask=None):
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(actual, dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"predicted {p.shape} and actual {y.shape} differ")
    w, n = _weights(p, mask)
    err = p - y
    loss = (w * err * err).sum() / n
    return float(loss), 2.0 * w * err / n


def mcce_loss(predicted, actual, mask=None):
    """Cross entropy summed over the last (class) axis, averaged over cells.

    Class probabilities are independent sigmoids, so nothing forces them to
    sum to one; only the positive-label terms enter the loss.
    """
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(actual, dtype=float)
    if p.shape != y.shape:
        raise ShapeError(f"class-count mismatch: predicted {p.shape}, actual {y.shape}")
    cell_mask = None if mask is None else np.asarray(mask, dtype=float)
    w, n = _weights(p[..., 0], cell_mask)
    w = w[..., None]
    pc = np.clip(p, EPS, 1.0 - EPS)
    loss = -(w * y * np.log(pc)).sum() / n
    grad = -w * y / pc / n
    return float(loss), grad
