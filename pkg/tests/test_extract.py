import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gasmste import belief as bf
from gasmste.extract import (canonical_assign, existence_probabilities, extract_estimates, kmeans,
                             label_assignments, normed_uncertainty, pool_components, rate_scale)
from gasmste.plume import Domain

DOM = Domain(0.0, 50.0, 0.0, 50.0)


def make_set(rows_per_particle, weights=None, m_max=None):
    m_max = m_max or max(len(r) for r in rows_per_particle)
    ps = [bf.HybridParticle(np.array(r, dtype=float)) for r in rows_per_particle]
    if weights is not None:
        for p, w in zip(ps, weights):
            p.weight = w
    return bf.ParticleSet.from_particles(ps, m_max)


def test_rate_scale_is_diagonal_over_mean():
    assert rate_scale(DOM, 10.0) == pytest.approx(math.hypot(50, 50) / 10)


def test_pool_counts_and_back_references():
    b = make_set([[(1, 2, 3)], [(4, 5, 6), (7, 8, 9)]], m_max=3)
    pts, p_idx, c_idx = pool_components(b)
    assert len(pts) == 3
    for pt, p, c in zip(pts, p_idx, c_idx):
        assert np.array_equal(pt, b.states[p, c])


def test_pool_full_cardinality():
    rng = np.random.default_rng(0)
    b = bf.initial_belief(50, 3, bf.BirthPrior(DOM), rng)
    b.states[:] = rng.uniform(1, 9, b.states.shape)
    b.card[:] = 3
    assert len(pool_components(b)[0]) == 150


def _best_two_means(points):
    """Exhaustive 2-means over splits along the first principal axis (oracle)."""
    centred = points - points.mean(axis=0)
    axis = np.linalg.svd(centred, full_matrices=False)[2][0]
    order = np.argsort(centred @ axis)
    best = (np.inf, None)
    for cut in range(1, len(points)):
        a, b = points[order[:cut]], points[order[cut:]]
        cost = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
        if cost < best[0]:
            best = (cost, (a.mean(0), b.mean(0)))
    return best[1]


def test_kmeans_two_tight_clusters():
    rng = np.random.default_rng(3)
    pts = np.vstack([[10, 10, 5] + 0.2 * rng.standard_normal((100, 3)),
                     [40, 40, 8] + 0.2 * rng.standard_normal((100, 3))])
    cents = kmeans(pts, 2, seed=1)
    oracle = _best_two_means(pts)
    for o in oracle:
        assert np.min(np.linalg.norm(cents - o, axis=1)) < 0.1


def test_kmeans_identical_points():
    pts = np.tile([3.0, 4.0, 5.0], (20, 1))
    cents = kmeans(pts, 2, seed=0)
    assert np.allclose(cents, [3, 4, 5])


def test_kmeans_single_cluster_is_mean():
    pts = np.random.default_rng(1).uniform(0, 10, (57, 3))
    assert np.allclose(kmeans(pts, 1, seed=4)[0], pts.mean(axis=0))


def test_kmeans_pads_too_few_points():
    pts = np.array([[1.0, 2.0, 3.0]])
    cents = kmeans(pts, 3, seed=0)
    assert cents.shape == (3, 3)
    assert np.allclose(cents, pts, atol=1e-5)


def test_kmeans_deterministic():
    pts = np.random.default_rng(2).uniform(0, 50, (300, 3))
    assert np.array_equal(kmeans(pts, 4, seed=9), kmeans(pts, 4, seed=9))


def test_assign_coincident_components():
    cents = np.array([[0, 0, 1], [10, 0, 1], [0, 10, 1]], dtype=float)
    assert canonical_assign(cents[[2, 0]], cents) == (2, 0)


def test_assign_tie_lower_label():
    cents = np.array([[0, 0, 1], [2, 0, 1]], dtype=float)
    assert canonical_assign([[1, 0, 1]], cents) == (0,)


def test_assign_matches_brute_force():
    rng = np.random.default_rng(8)
    for _ in range(50):
        comps = rng.uniform(0, 50, (3, 3))
        cents = rng.uniform(0, 50, (4, 3))
        best = min(permutations(range(4), 3),
                   key=lambda m: sum(np.linalg.norm(comps[i] - cents[m[i]]) for i in range(3)))
        assert canonical_assign(comps, cents) == best


def test_label_assignments_match_per_particle():
    rng = np.random.default_rng(5)
    b = bf.initial_belief(200, 4, bf.BirthPrior(DOM), rng)
    cents = rng.uniform(0, 50, (4, 3))
    lab = label_assignments(b, cents, q_scale=1.7)
    for i in range(len(b)):
        m = b.card[i]
        assert tuple(lab[i, :m]) == canonical_assign(b.states[i, :m], cents, q_scale=1.7)
        assert np.all(lab[i, m:] == -1)


def test_existence_probabilities():
    b = make_set([[(0, 0, 1), (10, 10, 1)], [(0, 0, 1)]], weights=[0.5, 0.5])
    assign = np.array([[0, 1], [0, -1]])
    pe = existence_probabilities(b, assign, 3)
    assert np.allclose(pe, [1.0, 0.5, 0.0])


def test_extract_identical_single_source():
    b = make_set([[(12, 34, 5)]] * 10, m_max=2)
    est = extract_estimates(b)
    assert est.count == 1
    src = est.sources[0]
    assert (src.x, src.y, src.rate) == pytest.approx((12, 34, 5))
    assert est.sigma == pytest.approx(0.0, abs=1e-12)


def test_extract_two_populations():
    rng = np.random.default_rng(1)
    rows = []
    for _ in range(200):
        a = [10, 10, 5] + 0.3 * rng.standard_normal(3)
        b = [40, 35, 8] + 0.3 * rng.standard_normal(3)
        rows.append([a, b] if rng.random() < 0.5 else [b, a])
    bel = make_set(rows)
    est = extract_estimates(bel, q_scale=rate_scale(DOM, 10.0), seed=3)
    assert est.count == 2
    arr = np.array([[s.x, s.y, s.rate] for s in est.sources])
    flat = np.array(rows).reshape(-1, 3)
    near_a = flat[np.linalg.norm(flat[:, :2] - [10, 10], axis=1) < 5].mean(axis=0)
    near_b = flat[np.linalg.norm(flat[:, :2] - [40, 35], axis=1) < 5].mean(axis=0)
    arr = arr[np.argsort(arr[:, 0])]
    assert np.allclose(arr[0], near_a, atol=1e-9)
    assert np.allclose(arr[1], near_b, atol=1e-9)


def test_extract_suppresses_minority_label():
    rows = [[(10, 10, 5), (40, 40, 5)]] * 4 + [[(10, 10, 5)]] * 6
    est = extract_estimates(make_set(rows), seed=0)
    assert est.count == 1
    pe = sorted(lab.existence for lab in est.labels)
    assert pe[-1] == pytest.approx(1.0)
    assert pe[-2] == pytest.approx(0.4)


def test_normed_uncertainty_two_point():
    b = make_set([[(11, 10, 5)], [(9, 10, 5)]], weights=[0.5, 0.5], m_max=1)
    est = extract_estimates(b)
    assert est.sigma == pytest.approx(1.0, rel=1e-12)
    assert normed_uncertainty(b, est) == pytest.approx(1.0, rel=1e-12)


def test_normed_uncertainty_zero_weight_neutral():
    base = make_set([[(11, 10, 5)], [(9, 10, 5)]], weights=[0.5, 0.5], m_max=1)
    more = make_set([[(11, 10, 5)], [(9, 10, 5)], [(9, 10, 5)]], weights=[0.5, 0.5, 0.0],
                    m_max=1)
    assert extract_estimates(more).sigma == pytest.approx(extract_estimates(base).sigma)


def test_normed_uncertainty_empty_is_inf():
    rows = [[(10, 10, 5)]] * 3 + [[(40, 40, 5)]] * 3 + [[(25, 5, 5)]] * 4
    est = extract_estimates(make_set(rows, m_max=3), seed=0)
    assert est.count == 0
    assert math.isinf(est.sigma)


@given(st.integers(0, 5000))
def test_extract_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    b = bf.initial_belief(150, 3, bf.BirthPrior(DOM), rng)
    shuffled = b.copy()
    for i in range(len(b)):
        m = b.card[i]
        shuffled.states[i, :m] = b.states[i, rng.permutation(m)]
    e1 = extract_estimates(b, seed=seed)
    e2 = extract_estimates(shuffled, seed=seed)
    assert [lab.existence for lab in e1.labels] == pytest.approx(
        [lab.existence for lab in e2.labels])
    for s1, s2 in zip(e1.sources, e2.sources):
        assert s1.as_array() == pytest.approx(s2.as_array(), rel=1e-9)


@given(st.integers(0, 5000))
def test_extract_structure(seed):
    rng = np.random.default_rng(seed)
    b = bf.initial_belief(120, 4, bf.BirthPrior(DOM), rng)
    b.weights = rng.dirichlet(np.ones(len(b)))
    est = extract_estimates(b, q_scale=rate_scale(DOM, 10.0), seed=1)
    assert 0 <= est.count <= 4
    assert all(0 <= lab.existence <= 1 for lab in est.labels)
    assert est.sigma >= 0
    if any(lab.existence >= 0.5 for lab in est.labels):
        assert est.count >= 1
    for j in est.confirmed:
        rows, cols = np.nonzero(est.assignment == j)
        comps = b.states[rows, cols]
        theta = est.labels[j].estimate.as_array()
        assert np.all(theta >= comps.min(axis=0) - 1e-9)
        assert np.all(theta <= comps.max(axis=0) + 1e-9)


def test_collapse_removes_label_spread():
    rng = np.random.default_rng(2)
    rows = [[[20, 20, 5] + rng.standard_normal(3)] for _ in range(50)]
    b = make_set(rows)
    est = extract_estimates(b)
    assert est.sigma > 0
    collapsed = b.copy()
    collapsed.states[:, 0] = est.sources[0].as_array()
    assert normed_uncertainty(collapsed, est) == pytest.approx(0.0, abs=1e-12)
