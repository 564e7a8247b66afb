"""Weighted binary cross entropy over channel grids, and the two-branch total.

The loss is a plain sum over cells and channels (not a mean) and is the
negative log-likelihood, so it is minimized. Predictions are clamped to
``[eps, 1 - eps]``; the gradient is zero where the clamp is active.
"""

from __future__ import annotations

import numpy as np

from .config import LossConfig


def _check(pred, target, w_han, w_scale):
    if not pred.shape == target.shape == w_han.shape == w_scale.shape:
        raise ValueError(f"grid shape mismatch: {[a.shape for a in (pred, target, w_han, w_scale)]}")


def wce_forward(pred, target, w_han, w_scale, eps: float = 1e-7) -> float:
    _check(pred, target, w_han, w_scale)
    p = np.minimum(np.maximum(pred, eps), 1.0 - eps)
    ll = np.log(p)
    ll *= target
    l0 = np.log1p(-p)
    l0 *= 1.0 - target
    ll += l0
    ll *= w_han
    ll *= w_scale
    # numpy's pairwise summation over a fresh C-contiguous array: fixed order for a given shape
    return -float(np.add.reduce(ll, axis=None))


def wce_backward(pred, target, w_han, w_scale, eps: float = 1e-7) -> np.ndarray:
    """Gradient of ``wce_forward`` with respect to ``pred``."""
    _check(pred, target, w_han, w_scale)
    p = np.clip(pred, eps, 1.0 - eps)
    grad = w_han * w_scale * ((1.0 - target) / (1.0 - p) - target / p)
    saturated = (pred < eps) | (pred > 1.0 - eps)
    return np.where(saturated, 0.0, grad)


def total_loss(loss_actor: float, loss_object: float, config: LossConfig = LossConfig()) -> float:
    return config.lambda_actor * loss_actor + config.lambda_object * loss_object
