"""Loss functions returning ``(value, gradient w.r.t. their input)``."""

import numpy as np

from .layers import sigmoid, softmax

EPS = 1e-7


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer ``labels`` under ``softmax(logits)``.

    The gradient w.r.t. the logits is ``(p - onehot) / N``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def clamped_log(p, eps=EPS):
    """``log(clip(p, eps, 1 - eps))`` and its derivative w.r.t. ``p`` (zero where clipped)."""
    p = np.asarray(p, dtype=np.float64)
    pc = np.clip(p, eps, 1.0 - eps)
    inside = (p >= eps) & (p <= 1.0 - eps)
    return np.log(pc), np.where(inside, 1.0 / pc, 0.0)


def mean_log_sigmoid(logits, target, eps=EPS):
    """``mean(log P(target))`` for a Bernoulli head, with clamped probabilities.

    ``target`` is 1 (use sigmoid) or 0 (use 1 - sigmoid); returns the value and
    its gradient w.r.t. the logits.
    """
    s = sigmoid(logits)
    p = s if target == 1 else 1.0 - s
    logp, dlogp = clamped_log(p, eps)
    dp_dz = s * (1.0 - s) * (1.0 if target == 1 else -1.0)
    n = logp.size
    return float(logp.mean()), dlogp * dp_dz / n


def mean_log_softmax(logits, labels, eps=EPS):
    """``mean(log P(Y = label))`` for a categorical head, with clamped probabilities."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    p = softmax(logits)
    py = p[np.arange(n), labels]
    logp, dlogp = clamped_log(py, eps)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), labels] = 1.0
    # d p_y / d z_j = p_y (onehot_j - p_j)
    grad = (dlogp * py)[:, None] * (onehot - p) / n
    return float(logp.mean()), grad
