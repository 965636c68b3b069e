import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vflshot import nn
from vflshot.cluster import gradients_to_templabels, kmeans, normalize_rows, purity

from oracles import exhaustive_bipartition_sse


class TestKMeans:
    def test_distinct_points(self):
        pts = np.array([[0.0, 0.0], [5.0, 1.0], [-3.0, 4.0]])
        res = kmeans(pts, 3, seed=0)
        assert res.inertia == 0.0
        assert sorted(res.assignments.tolist()) == [0, 1, 2]

    def test_two_blobs_match_exhaustive(self):
        rng = np.random.default_rng(0)
        pts = np.vstack([rng.normal(size=(4, 2)), rng.normal(size=(4, 2)) + 10])
        assert kmeans(pts, 2).inertia == pytest.approx(exhaustive_bipartition_sse(pts), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(2, 9), d=st.integers(1, 3), seed=st.integers(0, 100_000))
    def test_small_instances_optimal(self, n, d, seed):
        pts = np.random.default_rng(seed).normal(size=(n, d))
        assert kmeans(pts, 2, seed=seed).inertia == pytest.approx(exhaustive_bipartition_sse(pts),
                                                                  rel=1e-9, abs=1e-12)

    def test_duplicates(self):
        rng = np.random.default_rng(1)
        pts = np.vstack([rng.normal(size=(3, 2)), rng.normal(size=(3, 2)) + 6])
        single = kmeans(pts, 2).assignments
        double = kmeans(np.repeat(pts, 2, axis=0), 2).assignments
        same = single[:, None] == single[None, :]
        np.testing.assert_array_equal(double[::2][:, None] == double[::2][None, :], same)
        np.testing.assert_array_equal(double[::2], double[1::2])

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(5, 60), k=st.integers(1, 4), seed=st.integers(0, 100_000))
    def test_invariants(self, n, k, seed):
        pts = np.random.default_rng(seed).normal(size=(n, 3))
        res = kmeans(pts, k, seed=seed, restarts=2)
        assert np.all(np.diff(res.inertia_history) <= 1e-9)
        assert set(res.assignments.tolist()) <= set(range(k))
        assert len(set(res.assignments.tolist())) == k
        assert np.all(np.isfinite(res.centroids))
        recomputed = sum(np.sum((pts[res.assignments == j] - res.centroids[j]) ** 2) for j in range(k))
        assert res.inertia == pytest.approx(recomputed)

    def test_seeded(self):
        pts = np.random.default_rng(0).normal(size=(40, 2))
        a, b = kmeans(pts, 3, seed=5), kmeans(pts, 3, seed=5)
        np.testing.assert_array_equal(a.assignments, b.assignments)

    def test_errors(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((2, 2)), 3)
        with pytest.raises(ValueError):
            kmeans(np.array([[0.0], [np.inf]]), 1)


def _separable_gradients(seed, n=64, d=6, rep=4):
    """Partial gradients of a linear softmax head on two separable classes."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    h = rng.normal(size=(n, rep)) + 3.0 * (2 * y[:, None] - 1)
    head = nn.mlp_init([nn.LayerSpec(rep, 2, nn.IDENTITY)], seed)
    trace = nn.forward(head, h)
    _, dlogits = nn.softmax_cross_entropy(trace.output, y)
    _, grad_h = nn.backward(head, trace, dlogits)
    return grad_h, y


class TestTempLabels:
    def test_separable_linear_purity(self):
        for seed in range(5):
            g, y = _separable_gradients(seed)
            assert purity(gradients_to_templabels(g, 2, seed=seed), y) == 1.0

    def test_within_class_direction(self):
        g, y = _separable_gradients(0)
        u = normalize_rows(g)
        cos = u @ u.T
        same = y[:, None] == y[None, :]
        off = ~np.eye(len(y), dtype=bool)
        assert cos[same & off].mean() > cos[~same].mean()

    def test_single_class(self):
        assert np.all(gradients_to_templabels(np.random.default_rng(0).normal(size=(5, 3)), 1) == 0)

    def test_noise_is_chance(self):
        scores = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            y = rng.integers(0, 2, size=64)
            labels = gradients_to_templabels(rng.normal(size=(64, 4)), 2, seed=seed)
            scores.append(purity(labels, y))
        assert abs(np.mean(scores) - 0.5) <= 0.15

    def test_too_many_clusters(self):
        with pytest.raises(ValueError):
            gradients_to_templabels(np.zeros((2, 2)), 3)

    def test_purity(self):
        assert purity([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
        assert purity([0, 0, 0, 0], [1, 1, 0, 0]) == 0.5
