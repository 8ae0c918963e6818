"""Class-weighted binary cross-entropy on probabilities."""

import numpy as np

PROB_CLAMP = 1e-7


def weighted_bce(probs, labels, pos_weight: float = 1.0):
    """Mean of -[w * y * ln(p) + (1 - y) * ln(1 - p)] over all elements.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs.
    Returns (loss, gradient w.r.t. probs).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ValueError(f"shape mismatch: {probs.shape} vs {labels.shape}")
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    n = p.size
    loss = -(pos_weight * labels * np.log(p) + (1.0 - labels) * np.log1p(-p)).sum() / n
    grad = (-pos_weight * labels / p + (1.0 - labels) / (1.0 - p)) / n
    return loss, grad
