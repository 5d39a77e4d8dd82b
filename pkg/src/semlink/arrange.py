"""Slot scheduling: match descending priority to descending predicted gain.

``arrange`` produces the permuted feature tensor plus the feature order
``eta``, where ``eta[j]`` is the original index of the feature carried in
slot j; ``inverse_arrange`` undoes it at the receiver.
"""

from __future__ import annotations

import numpy as np

__all__ = ["sort_desc_with_indices", "arrange", "inverse_arrange"]


def sort_desc_with_indices(values) -> np.ndarray:
    """Indices that sort `values` descending; ties keep ascending index order."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"expected a 1-D score vector, got shape {values.shape}")
    return np.argsort(-values, kind="stable")


def arrange(features, priority, predicted_csi):
    """Assign the i-th highest-priority feature to the i-th best predicted slot.

    features: (c, h, w) array; priority: (c,) scores; predicted_csi: (c,)
    complex (or already-absolute real) per-slot channel forecasts.
    Returns (arranged_features, eta).
    """
    features = np.asarray(features, dtype=np.float64)
    priority = np.asarray(priority, dtype=np.float64)
    amp = np.abs(np.asarray(predicted_csi))
    c = features.shape[0]
    if priority.shape != (c,) or amp.shape != (c,):
        raise ValueError(
            f"length mismatch: {c} features, {priority.shape[0]} priorities, "
            f"{amp.shape[0]} predicted slots")
    u = sort_desc_with_indices(amp)
    v = sort_desc_with_indices(priority)
    eta = np.empty(c, dtype=np.int64)
    arranged = np.empty_like(features)
    eta[u] = v
    arranged[u] = features[v]
    return arranged, eta


def _check_permutation(eta, c):
    eta = np.asarray(eta)
    if eta.shape != (c,) or not np.array_equal(np.sort(eta), np.arange(c)):
        raise ValueError(f"feature order is not a permutation of 0..{c - 1}: {eta}")
    return eta.astype(np.int64)


def inverse_arrange(received, eta):
    """Restore original feature order: output[eta[j]] = received[j]."""
    received = np.asarray(received, dtype=np.float64)
    eta = _check_permutation(eta, received.shape[0])
    restored = np.empty_like(received)
    restored[eta] = received
    return restored
