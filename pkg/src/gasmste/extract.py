"""Label-consistent point estimates from an unordered hybrid particle set.

All components of all particles are pooled and clustered into ``m_max``
centroids. Each particle's components are then matched to centroids by an
exhaustive injective assignment, which gives every component a canonical
label. Existence probabilities, weighted means and the normed uncertainty
follow from those labels.

Clustering and matching use ``(x, y, s_Q * Q)`` so that rates and
positions carry comparable spread; reported estimates are in native units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .belief import ParticleSet
from .plume import Domain, SourceTerm

KMEANS_MAX_ITER = 100
PAD_JITTER = 1e-6


@dataclass(frozen=True)
class Label:
    centroid: np.ndarray
    existence: float
    estimate: SourceTerm | None


@dataclass
class EstimateSet:
    labels: list[Label]
    sigma: float
    assignment: np.ndarray = field(repr=False)
    q_scale: float = 1.0

    @property
    def count(self) -> int:
        return len(self.confirmed)

    @property
    def confirmed(self) -> list[int]:
        return [j for j, lab in enumerate(self.labels) if lab.existence >= 0.5]

    @property
    def sources(self) -> list[SourceTerm]:
        return [self.labels[j].estimate for j in self.confirmed]


def rate_scale(domain: Domain, mean_rate: float) -> float:
    """Weight applied to the rate axis: domain diagonal over the prior mean rate."""
    return domain.diagonal / mean_rate


def pool_components(belief: ParticleSet):
    """Flatten every active component. Returns ``(points, particle_idx, component_idx)``."""
    p_idx, c_idx = np.nonzero(belief.active)
    return belief.states[p_idx, c_idx].copy(), p_idx, c_idx


def _kmeanspp(points, k, rng):
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[c]) ** 2, axis=1))
    return centers


def _sq_dists(points, centers):
    return (np.sum(points ** 2, axis=1)[:, None] - 2 * points @ centers.T
            + np.sum(centers ** 2, axis=1)[None, :])


def kmeans(points, k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """Lloyd's algorithm from a k-means++ start; deterministic for a given seed.

    An empty cluster is re-seeded at the point farthest from its current
    centre. Fewer points than clusters are padded with jittered copies.
    """
    pts = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    if len(pts) == 0:
        raise ValueError("kmeans needs at least one point")
    if len(pts) < k:
        extra = pts[rng.integers(len(pts), size=k - len(pts))]
        pts = np.vstack([pts, extra + PAD_JITTER * rng.standard_normal(extra.shape)])
    centers = _kmeanspp(pts, k, rng)
    assign = None
    for _ in range(max_iter):
        d2 = _sq_dists(pts, centers)
        new_assign = np.argmin(d2, axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        counts = np.bincount(assign, minlength=k)
        filled = counts > 0
        for c in range(pts.shape[1]):
            sums = np.bincount(assign, pts[:, c], minlength=k)
            centers[filled, c] = sums[filled] / counts[filled]
        for j in np.flatnonzero(counts == 0):
            own = d2[np.arange(len(pts)), assign]
            far = int(np.argmax(own))
            centers[j] = pts[far]
            assign[far] = j
    return centers


def _injective_maps(m: int, k: int) -> np.ndarray:
    return np.array(list(permutations(range(k), m)), dtype=np.int64).reshape(-1, m)


def canonical_assign(components, centroids, q_scale: float = 1.0) -> tuple[int, ...]:
    """Injective component-to-label map minimising the summed Euclidean distance.

    Exhaustive over all ``k!/(k-m)!`` maps; ties resolve to the
    lexicographically first map, so lower labels win.
    """
    comps = np.asarray(components, dtype=float).reshape(-1, 3) * [1, 1, q_scale]
    cents = np.asarray(centroids, dtype=float)
    maps = _injective_maps(len(comps), len(cents))
    dist = np.linalg.norm(comps[:, None, :] - cents[None, :, :], axis=2)
    cost = dist[np.arange(len(comps))[None, :], maps].sum(axis=1)
    return tuple(int(v) for v in maps[int(np.argmin(cost))])


def label_assignments(belief: ParticleSet, centroids, q_scale: float = 1.0) -> np.ndarray:
    """Canonical labels for every component, shape (N, m_max); -1 marks empty rows."""
    cents = np.asarray(centroids, dtype=float)
    k = len(cents)
    out = np.full(belief.card.shape + (belief.m_max,), -1, dtype=np.int64)
    scaled = belief.states * np.array([1.0, 1.0, q_scale])
    for m in np.unique(belief.card):
        rows = np.flatnonzero(belief.card == m)
        maps = _injective_maps(int(m), k)
        dist = np.linalg.norm(scaled[rows, :m, None, :] - cents[None, None, :, :], axis=3)
        cost = np.zeros((len(rows), len(maps)))
        for i in range(m):
            cost += dist[:, i, maps[:, i]]
        out[rows, :m] = maps[np.argmin(cost, axis=1)]
    return out


def existence_probabilities(belief: ParticleSet, assignment: np.ndarray, k: int) -> np.ndarray:
    hit = np.zeros((len(belief), k), dtype=bool)
    rows, cols = np.nonzero(assignment >= 0)
    hit[rows, assignment[rows, cols]] = True
    return belief.weights @ hit


def _label_members(assignment, j):
    return np.nonzero(assignment == j)


def extract_estimates(belief: ParticleSet, q_scale: float = 1.0, seed: int = 0) -> EstimateSet:
    k = belief.m_max
    pts, _, _ = pool_components(belief)
    # canonical row order so clustering ignores how components are listed
    pts = pts[np.lexsort(pts.T[::-1])]
    centroids = kmeans(pts * [1.0, 1.0, q_scale], k, seed=seed)
    assignment = label_assignments(belief, centroids, q_scale)
    pe = existence_probabilities(belief, assignment, k)
    labels = []
    for j in range(k):
        estimate = None
        if pe[j] >= 0.5:
            rows, cols = _label_members(assignment, j)
            w = belief.weights[rows]
            theta = (w[:, None] * belief.states[rows, cols]).sum(axis=0) / w.sum()
            estimate = SourceTerm(float(theta[0]), float(theta[1]), float(theta[2]))
        labels.append(Label(centroids[j], float(min(pe[j], 1.0)), estimate))
    est = EstimateSet(labels, math.inf, assignment, q_scale)
    est.sigma = normed_uncertainty(belief, est)
    return est


def normed_uncertainty(belief: ParticleSet, estimates: EstimateSet) -> float:
    """Root of the summed weighted squared spread about each confirmed estimate.

    Returns ``inf`` when no label is confirmed.
    """
    confirmed = estimates.confirmed
    if not confirmed:
        return math.inf
    total = 0.0
    for j in confirmed:
        rows, cols = _label_members(estimates.assignment, j)
        theta_bar = estimates.labels[j].estimate
        diff = belief.states[rows, cols] - [theta_bar.x, theta_bar.y, theta_bar.rate]
        total += float(belief.weights[rows] @ np.sum(diff * diff, axis=1))
    return math.sqrt(total)
