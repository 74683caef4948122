"""GOSPA distance between finite sets of vectors.

Matched pairs contribute ``min(d, c)^2`` and every unmatched element of the
larger set contributes ``c^2``; there is no 1/2 factor on the cardinality
term.
"""
from __future__ import annotations

import math
from itertools import permutations
from typing import Sequence

import numpy as np

from .plume import SourceTerm


def _as_set(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, arr.shape[-1] if arr.ndim > 1 else 0)
    return arr.reshape(len(arr), -1)


def gospa(X, Y, c: float) -> float:
    if c <= 0:
        raise ValueError("cutoff c must be > 0")
    X, Y = _as_set(X), _as_set(Y)
    if len(X) > len(Y):
        X, Y = Y, X
    nx, ny = len(X), len(Y)
    if ny == 0:
        return 0.0
    if nx == 0:
        return math.sqrt(c * c * ny)
    if X.shape[1] != Y.shape[1]:
        raise ValueError("vectors must share a dimension")
    dist = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
    d2 = np.minimum(dist, c) ** 2
    maps = np.array(list(permutations(range(ny), nx)))
    # sorted terms make the sum independent of argument order
    best = np.sort(d2[np.arange(nx)[None, :], maps], axis=1).sum(axis=1).min()
    return math.sqrt(float(best) + c * c * (ny - nx))


def _sources(obj) -> Sequence[SourceTerm]:
    # accepts an EstimateSet (or anything exposing confirmed ``sources``)
    return obj.sources if hasattr(obj, "sources") else obj


def source_vectors(sources, q_scale: float | None = None) -> np.ndarray:
    """Positions, or positions plus scaled rate when ``q_scale`` is given."""
    sources = _sources(sources)
    if q_scale is None:
        return np.array([[s.x, s.y] for s in sources]).reshape(-1, 2)
    return np.array([[s.x, s.y, q_scale * s.rate] for s in sources]).reshape(-1, 3)


def localization_gospa(estimates, truth: Sequence[SourceTerm], c: float) -> float:
    """GOSPA on positions only."""
    return gospa(source_vectors(estimates), source_vectors(truth), c)


def full_gospa(estimates, truth: Sequence[SourceTerm], c: float, q_scale: float) -> float:
    """GOSPA on ``(x, y, q_scale * Q)``."""
    return gospa(source_vectors(estimates, q_scale), source_vectors(truth, q_scale), c)
