from __future__ import annotations

import numpy as np

_BCE_EPS = 1e-7


def l1_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its gradient with respect to pred."""
    diff = pred - target
    value = float(np.abs(diff).mean())
    grad = np.sign(diff) / diff.size
    return value, grad


def bce_loss(prob: np.ndarray, label: float | np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy against a 0/1 label, gradient w.r.t. prob.

    Probabilities are clipped away from {0, 1} by 1e-7 for stability; the
    gradient is evaluated at the clipped values.
    """
    p = np.clip(prob, _BCE_EPS, 1.0 - _BCE_EPS)
    t = np.broadcast_to(np.asarray(label, dtype=p.dtype), p.shape)
    value = float(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean())
    grad = (-(t / p) + (1.0 - t) / (1.0 - p)) / p.size
    return value, grad
