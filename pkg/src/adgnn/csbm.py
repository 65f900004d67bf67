"""Contextual stochastic block model sampling.

Two-class graphs with Bernoulli edges (intra-class probability p_in,
inter-class p_out) and Gaussian node features centered on a per-class
prototype.  Also provides the local neighborhood sampler used by the
Monte Carlo oracles in :mod:`adgnn.theory`: rather than a whole graph, it
draws one node's feature vector together with the features of a
neighborhood whose label composition is fixed in advance.

Randomness is split into two named counter-based streams (structure,
features) spawned from the user seed, so regenerating features never
perturbs the topology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, LabelVector, NodeProfile, build_graph

__all__ = [
    "CsbmParams",
    "ClassStats",
    "sample_graph",
    "homophily_from_target",
    "measured_edge_homophily",
    "sample_neighborhood",
    "sample_neighborhood_batch",
    "canonical_prototypes",
]


@dataclass(frozen=True)
class CsbmParams:
    """Full description of one contextual SBM instance."""

    n0: int
    n1: int
    mu0: np.ndarray
    mu1: np.ndarray
    sigma: float
    p_in: float
    p_out: float

    def __post_init__(self) -> None:
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        mu1 = np.asarray(self.mu1, dtype=np.float64)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "mu1", mu1)
        if self.n0 < 0 or self.n1 < 0 or self.n0 + self.n1 == 0:
            raise ValueError("class sizes must be non-negative and not both zero")
        if mu0.ndim != 1 or mu0.shape != mu1.shape:
            raise ValueError("prototypes must be 1-d vectors of equal dimension")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        for p in (self.p_in, self.p_out):
            if not 0.0 <= p <= 1.0:
                raise ValueError("edge probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class ClassStats:
    """The two scalars the depth-benefit theory needs from a feature model:
    squared prototype separation and intra-class noise variance."""

    delta_sq: float
    sigma_sq: float

    def __post_init__(self) -> None:
        if self.delta_sq < 0 or self.sigma_sq < 0:
            raise ValueError("delta_sq and sigma_sq must be non-negative")


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    struct_seq, feat_seq = np.random.SeedSequence(seed).spawn(2)
    return (
        np.random.Generator(np.random.Philox(struct_seq)),
        np.random.Generator(np.random.Philox(feat_seq)),
    )


def sample_graph(params: CsbmParams, seed: int) -> tuple[Graph, np.ndarray, LabelVector]:
    """Draw one graph, its feature matrix, and its labels.

    Nodes 0..n0-1 carry label 0, the rest label 1.  Identical seeds give
    bit-identical output.
    """
    struct_rng, feat_rng = _streams(seed)
    n = params.n0 + params.n1
    y = np.concatenate([
        np.zeros(params.n0, dtype=np.int64),
        np.ones(params.n1, dtype=np.int64),
    ])

    rows = []
    cols = []
    # one Bernoulli sweep per upper-triangle row; column class decides p
    for i in range(n - 1):
        js = np.arange(i + 1, n)
        p = np.where((js < params.n0) == (i < params.n0), params.p_in, params.p_out)
        hit = struct_rng.random(n - i - 1) < p
        if hit.any():
            picked = js[hit]
            rows.append(np.full(picked.shape[0], i, dtype=np.int64))
            cols.append(picked)
    if rows:
        edges = np.stack([np.concatenate(rows), np.concatenate(cols)], axis=1)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    graph = build_graph(edges, num_nodes=n)

    dim = params.mu0.shape[0]
    features = np.where(y[:, None] == 0, params.mu0, params.mu1)
    features = features + params.sigma * feat_rng.standard_normal((n, dim))
    return graph, features, LabelVector(y, num_classes=2)


def homophily_from_target(
    target_homophily: float,
    mean_degree: float,
    n0: int,
    n1: int,
) -> tuple[float, float]:
    """Invert (edge homophily, mean degree) into (p_in, p_out) in expectation.

    With E[intra edges] = h * total and E[inter edges] = (1 - h) * total,
    dividing by the number of available node pairs of each kind gives the
    Bernoulli rates.  Raises if either rate leaves [0, 1] or a needed pair
    class is empty.
    """
    if not 0.0 <= target_homophily <= 1.0:
        raise ValueError("target homophily must lie in [0, 1]")
    if mean_degree < 0:
        raise ValueError("mean degree must be non-negative")
    n = n0 + n1
    pairs_in = n0 * (n0 - 1) / 2 + n1 * (n1 - 1) / 2
    pairs_out = n0 * n1
    total_edges = n * mean_degree / 2.0
    intra = target_homophily * total_edges
    inter = (1.0 - target_homophily) * total_edges
    if intra > 0 and pairs_in == 0:
        raise ValueError("no intra-class pairs available")
    if inter > 0 and pairs_out == 0:
        raise ValueError("no inter-class pairs available")
    p_in = intra / pairs_in if pairs_in else 0.0
    p_out = inter / pairs_out if pairs_out else 0.0
    if p_in > 1.0 or p_out > 1.0:
        raise ValueError("requested density is infeasible for these class sizes")
    return float(p_in), float(p_out)


def measured_edge_homophily(graph: Graph, labels: LabelVector) -> float:
    """Fraction of edges joining same-label endpoints."""
    if graph.num_edges == 0:
        raise ValueError("homophily is undefined on an edgeless graph")
    edges = graph.edges()
    y = labels.labels
    return float(np.mean(y[edges[:, 0]] == y[edges[:, 1]]))


def canonical_prototypes(delta_sq: float, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Two prototypes at squared distance delta_sq, symmetric about the
    origin along the first coordinate."""
    if delta_sq < 0:
        raise ValueError("delta_sq must be non-negative")
    if dim < 1:
        raise ValueError("dim must be positive")
    mu0 = np.zeros(dim)
    mu0[0] = 0.5 * np.sqrt(delta_sq)
    return mu0, -mu0


def sample_neighborhood_batch(
    profile: NodeProfile,
    stats: ClassStats,
    own_label: int,
    trials: int,
    rng: np.random.Generator,
    dim: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized neighborhood draws for Monte Carlo estimation.

    Returns (center, neighbors) with shapes (trials, dim) and
    (trials, degree, dim).  Neighbor rows are ordered same-class block
    first, then different-class; the draw order is center, same block,
    different block, so results are reproducible from the generator state.
    """
    if own_label not in (0, 1):
        raise ValueError("own_label must be 0 or 1")
    if trials < 1:
        raise ValueError("trials must be positive")
    mu0, mu1 = canonical_prototypes(stats.delta_sq, dim)
    own = mu0 if own_label == 0 else mu1
    other = mu1 if own_label == 0 else mu0
    sigma = np.sqrt(stats.sigma_sq)
    center = own + sigma * rng.standard_normal((trials, dim))
    neighbors = np.empty((trials, profile.degree, dim))
    neighbors[:, : profile.d_plus, :] = own + sigma * rng.standard_normal(
        (trials, profile.d_plus, dim)
    )
    neighbors[:, profile.d_plus :, :] = other + sigma * rng.standard_normal(
        (trials, profile.d_minus, dim)
    )
    return center, neighbors


def sample_neighborhood(
    profile: NodeProfile,
    stats: ClassStats,
    own_label: int,
    rng: np.random.Generator,
    dim: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Single draw of (center features, neighbor feature rows)."""
    center, neighbors = sample_neighborhood_batch(
        profile, stats, own_label, trials=1, rng=rng, dim=dim
    )
    return center[0], neighbors[0]
