import numpy as np
import pytest

from adgnn.csbm import (
    ClassStats,
    CsbmParams,
    canonical_prototypes,
    homophily_from_target,
    measured_edge_homophily,
    sample_graph,
    sample_neighborhood,
    sample_neighborhood_batch,
)
from adgnn.graph import LabelVector, NodeProfile, build_graph, degrees, profile_counts


def small_params(**over):
    base = dict(
        n0=60,
        n1=60,
        mu0=np.array([1.0, 0.0]),
        mu1=np.array([-1.0, 0.0]),
        sigma=1.0,
        p_in=0.2,
        p_out=0.05,
    )
    base.update(over)
    return CsbmParams(**base)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_params(p_in=1.5)
        with pytest.raises(ValueError):
            small_params(sigma=-1.0)
        with pytest.raises(ValueError):
            small_params(mu1=np.array([1.0, 0.0, 0.0]))
        with pytest.raises(ValueError):
            small_params(n0=0, n1=0)
        with pytest.raises(ValueError):
            ClassStats(delta_sq=-1.0, sigma_sq=1.0)


class TestSampleGraph:
    def test_deterministic(self):
        p = small_params()
        g1, x1, y1 = sample_graph(p, seed=42)
        g2, x2, y2 = sample_graph(p, seed=42)
        assert np.array_equal(g1.csr_neighbors, g2.csr_neighbors)
        assert np.array_equal(x1, x2)
        assert np.array_equal(y1.labels, y2.labels)
        g3, _, _ = sample_graph(p, seed=43)
        assert not np.array_equal(g1.csr_neighbors, g3.csr_neighbors) or g1.num_edges != g3.num_edges

    def test_labels_block_structure(self):
        g, x, y = sample_graph(small_params(n0=10, n1=5), seed=0)
        assert np.array_equal(y.labels, np.concatenate([np.zeros(10), np.ones(5)]))
        assert x.shape == (15, 2)

    def test_degenerate_probabilities(self):
        g, _, _ = sample_graph(small_params(p_in=0.0, p_out=0.0), seed=1)
        assert g.num_edges == 0
        n0 = n1 = 12
        g, _, y = sample_graph(small_params(n0=n0, n1=n1, p_in=1.0, p_out=1.0), seed=1)
        n = n0 + n1
        assert g.num_edges == n * (n - 1) // 2

    def test_pure_homophily_extremes(self):
        g, _, y = sample_graph(small_params(p_in=0.3, p_out=0.0), seed=5)
        assert measured_edge_homophily(g, y) == 1.0
        g, _, y = sample_graph(small_params(p_in=0.0, p_out=0.3), seed=5)
        assert measured_edge_homophily(g, y) == 0.0

    def test_edge_rate_matches_probability(self):
        # statistical check on the Bernoulli rates, generous tolerance
        p = small_params(n0=300, n1=300, p_in=0.1, p_out=0.02)
        g, _, y = sample_graph(p, seed=3)
        d_plus, d_minus, _ = profile_counts(g, y)
        intra = d_plus.sum() / 2
        inter = d_minus.sum() / 2
        pairs_in = 2 * (300 * 299 / 2)
        pairs_out = 300 * 300
        assert intra / pairs_in == pytest.approx(0.1, rel=0.1)
        assert inter / pairs_out == pytest.approx(0.02, rel=0.15)

    def test_feature_moments(self):
        p = small_params(n0=4000, n1=4000, sigma=0.5, p_in=0.0, p_out=0.0)
        _, x, y = sample_graph(p, seed=9)
        m0 = x[y.labels == 0].mean(axis=0)
        assert np.allclose(m0, p.mu0, atol=0.05)
        assert np.std(x[y.labels == 0][:, 1]) == pytest.approx(0.5, rel=0.05)

    def test_sigma_zero_features_exact(self):
        p = small_params(sigma=0.0)
        _, x, y = sample_graph(p, seed=2)
        assert np.array_equal(x[y.labels == 0], np.tile(p.mu0, (60, 1)))


class TestHomophilyInversion:
    def test_round_trip_in_expectation(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            h = float(rng.uniform(0, 1))
            md = float(rng.uniform(1, 12))
            n0 = int(rng.integers(50, 200))
            n1 = int(rng.integers(50, 200))
            p_in, p_out = homophily_from_target(h, md, n0, n1)
            pairs_in = n0 * (n0 - 1) / 2 + n1 * (n1 - 1) / 2
            pairs_out = n0 * n1
            e_intra = p_in * pairs_in
            e_inter = p_out * pairs_out
            total = e_intra + e_inter
            assert total == pytest.approx((n0 + n1) * md / 2, rel=1e-9)
            assert e_intra / total == pytest.approx(h, abs=1e-9)

    def test_extremes(self):
        p_in, p_out = homophily_from_target(1.0, 4.0, 100, 100)
        assert p_out == 0.0 and p_in > 0
        p_in, p_out = homophily_from_target(0.0, 4.0, 100, 100)
        assert p_in == 0.0 and p_out > 0

    def test_measured_tracks_target(self):
        for h in (0.1, 0.5, 0.9):
            p_in, p_out = homophily_from_target(h, 10.0, 400, 400)
            g, _, y = sample_graph(
                small_params(n0=400, n1=400, p_in=p_in, p_out=p_out), seed=11
            )
            assert measured_edge_homophily(g, y) == pytest.approx(h, abs=0.05)

    def test_infeasible(self):
        with pytest.raises(ValueError):
            homophily_from_target(1.0, 50.0, 5, 5)
        with pytest.raises(ValueError):
            homophily_from_target(1.2, 4.0, 10, 10)


class TestMeasuredHomophily:
    def test_exact_small_case(self):
        g = build_graph([(0, 1), (1, 2), (0, 2), (2, 3)], num_nodes=4)
        y = LabelVector(np.array([0, 0, 0, 1]), 2)
        assert measured_edge_homophily(g, y) == pytest.approx(0.75)

    def test_empty_graph_rejected(self):
        g = build_graph([], num_nodes=3)
        with pytest.raises(ValueError):
            measured_edge_homophily(g, LabelVector(np.zeros(3, dtype=int), 2))


class TestNeighborhoodSampler:
    def test_shapes_and_order(self):
        rng = np.random.default_rng(0)
        prof = NodeProfile(d_plus=3, d_minus=2, degree=5)
        stats = ClassStats(delta_sq=4.0, sigma_sq=0.0)
        center, nbrs = sample_neighborhood(prof, stats, own_label=0, rng=rng, dim=4)
        mu0, mu1 = canonical_prototypes(4.0, 4)
        assert center.shape == (4,) and nbrs.shape == (5, 4)
        assert np.array_equal(center, mu0)
        assert np.array_equal(nbrs[:3], np.tile(mu0, (3, 1)))
        assert np.array_equal(nbrs[3:], np.tile(mu1, (2, 1)))

    def test_prototype_distance(self):
        mu0, mu1 = canonical_prototypes(9.0, 6)
        assert np.sum((mu0 - mu1) ** 2) == pytest.approx(9.0)
        assert np.array_equal(mu0, -mu1)

    def test_batch_moments(self):
        rng = np.random.default_rng(1)
        prof = NodeProfile(d_plus=2, d_minus=1, degree=3)
        stats = ClassStats(delta_sq=4.0, sigma_sq=1.0)
        center, nbrs = sample_neighborhood_batch(prof, stats, 1, trials=200_000, rng=rng, dim=3)
        mu0, mu1 = canonical_prototypes(4.0, 3)
        assert np.allclose(center.mean(axis=0), mu1, atol=0.02)
        assert np.allclose(nbrs[:, :2].mean(axis=(0, 1)), mu1, atol=0.02)
        assert np.allclose(nbrs[:, 2].mean(axis=0), mu0, atol=0.02)
        assert center.var(axis=0).mean() == pytest.approx(1.0, rel=0.02)

    def test_validation(self):
        rng = np.random.default_rng(0)
        prof = NodeProfile(1, 1, 2)
        stats = ClassStats(4.0, 1.0)
        with pytest.raises(ValueError):
            sample_neighborhood(prof, stats, own_label=2, rng=rng)
        with pytest.raises(ValueError):
            sample_neighborhood_batch(prof, stats, 0, trials=0, rng=rng)
