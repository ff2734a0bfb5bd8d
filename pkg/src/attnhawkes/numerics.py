"""Small stable scalar transforms used across the model and trainer."""

from __future__ import annotations

import numpy as np

__all__ = ["softplus", "sigmoid", "softplus_inv", "log_softplus", "dlog_softplus"]


def softplus(x):
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, x)


def sigmoid(x):
    """Logistic function, stable for large negative and positive inputs."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus_inv(y):
    """Inverse of softplus on positive inputs."""
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0):
        raise ValueError("softplus_inv requires positive inputs")
    # above 30 the forward map is the identity to double precision
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))


def log_softplus(x):
    """log(softplus(x)), asymptotically x for very negative inputs."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < -30.0, x, np.log(np.logaddexp(0.0, np.maximum(x, -30.0))))


def dlog_softplus(x):
    """Derivative of log(softplus(x)), with the underflow guard at -30."""
    x = np.asarray(x, dtype=np.float64)
    sp = np.logaddexp(0.0, x)
    ratio = sigmoid(x) / np.where(sp > 0.0, sp, 1.0)
    return np.where(x < -30.0, 1.0, ratio)
