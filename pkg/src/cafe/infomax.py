"""Infomax objective on classifier outputs: mean per-sample entropy minus the
entropy of the batch-averaged prediction."""

import numpy as np

from .errors import InvalidInput

LOG_FLOOR = 1e-12


def softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _xlogx(p):
    return p * np.log(np.maximum(p, LOG_FLOOR))


def infomax_from_probs(probs):
    """Loss value for a ``(B, C)`` matrix of row-stochastic probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    marginal = probs.mean(axis=0)
    return float(-np.sum(_xlogx(probs)) / probs.shape[0] + np.sum(_xlogx(marginal)))


def infomax_loss(logits):
    """Infomax loss of a logit batch and its gradient with respect to the logits.

    Returns ``(loss, grad_logits)``. The loss lies in ``[-log C, log C]``;
    ``-log C`` is reached by confident predictions spread evenly over classes.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1 or logits.shape[1] < 2:
        raise InvalidInput(f"expected (B, C) logits with B >= 1 and C >= 2, got {logits.shape}")
    b = logits.shape[0]
    p = softmax(logits)
    marginal = p.mean(axis=0)
    loss = infomax_from_probs(p)
    # dL/dp_ij = -(log p_ij + 1)/B + (log pbar_j + 1)/B
    g_p = (np.log(np.maximum(marginal, LOG_FLOOR))[None, :] - np.log(np.maximum(p, LOG_FLOOR))) / b
    grad = p * (g_p - np.sum(g_p * p, axis=1, keepdims=True))
    return loss, grad
