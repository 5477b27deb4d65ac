"""Numerically stable sigmoid helpers shared by the training and critique losses."""
import numpy as np


def sigmoid(x):
    """Elementwise logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow; equals -softplus(-x)."""
    x = np.asarray(x, dtype=np.float64)
    # min(x, 0) - log1p(exp(-|x|))
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    if out.ndim == 0:
        return float(out)
    return out
