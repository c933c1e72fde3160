"""Sampling without replacement over weighted items."""

import numpy as np

from ..exceptions import InvalidArgumentError


def _check(weights: np.ndarray, m: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if not 0 <= m <= len(weights):
        raise InvalidArgumentError(f"Cannot select {m} of {len(weights)} items")
    if np.any(~np.isfinite(weights)) or np.any(weights < 0):
        raise InvalidArgumentError("Weights must be finite and non-negative")
    return weights


def weighted_sample(weights: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """
    Select ``m`` distinct indices with probability proportional to weight (exponential race).

    Each item draws an arrival time ``Exp(1) / w``; the ``m`` earliest arrivals win. Zero-weight
    items arrive at infinity and are only taken, lowest index first, once every positive-weight
    item is selected. Returns the indices sorted ascending.
    """
    weights = _check(weights, m)
    arrivals = rng.exponential(size=len(weights))
    with np.errstate(divide="ignore"):
        keys = np.where(weights > 0, arrivals / np.where(weights > 0, weights, 1.0), np.inf)
    return np.sort(np.argsort(keys, kind="stable")[:m])


def top_m(weights: np.ndarray, m: int) -> np.ndarray:
    """The ``m`` heaviest indices (ties to the lowest index), sorted ascending."""
    weights = _check(weights, m)
    return np.sort(np.argsort(-weights, kind="stable")[:m])
