"""Training-free per-edge similarity scores.

Each scorer assigns every directed arc a value in [0, 1], symmetric across
the two directions of an undirected edge, to be used in place of the learned
same-label probability.  The fast variant normalizes degree products by the
maximum; the named structural heuristics are min-max normalized over the
edge set, with an all-equal score vector degenerating to all ones (no
discriminative information; nothing gets filtered).
"""

from __future__ import annotations

from collections import deque

import numpy as np
import scipy.sparse as sp

from .graph import Graph, degrees

__all__ = [
    "HEURISTIC_NAMES",
    "degree_similarity",
    "heuristic_similarity",
    "betweenness_centrality",
    "core_numbers",
    "local_clustering",
]

HEURISTIC_NAMES = (
    "common_neighbors",
    "jaccard",
    "adamic_adar",
    "betweenness_product",
    "kshell_product",
    "clustering_product",
)


def _require_edges(graph: Graph) -> None:
    if graph.num_edges == 0:
        raise ValueError("similarity scores need at least one edge")


def _minmax_unit(raw: np.ndarray) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        return np.ones_like(raw)
    return (raw - lo) / (hi - lo)


def degree_similarity(graph: Graph) -> np.ndarray:
    """Degree-product score per directed arc, scaled so the largest edge
    product is exactly 1."""
    _require_edges(graph)
    deg = degrees(graph)
    products = deg[graph.arc_sources()] * deg[graph.csr_neighbors]
    return products / products.max()


def _adjacency(graph: Graph) -> sp.csr_matrix:
    src = graph.arc_sources()
    return sp.csr_matrix(
        (np.ones(src.shape[0]), (src, graph.csr_neighbors)),
        shape=(graph.num_nodes, graph.num_nodes),
    )


def _arc_entries(matrix: sp.csr_matrix, graph: Graph) -> np.ndarray:
    vals = matrix[graph.arc_sources(), graph.csr_neighbors]
    return np.asarray(vals).reshape(-1)


def _common_neighbor_counts(graph: Graph) -> np.ndarray:
    adj = _adjacency(graph)
    return _arc_entries(adj @ adj, graph)


def betweenness_centrality(graph: Graph) -> np.ndarray:
    """Brandes shortest-path betweenness, unnormalized, with each
    unordered pair counted once (undirected convention)."""
    n = graph.num_nodes
    centrality = np.zeros(n)
    for source in range(n):
        # single-source shortest path counts
        sigma = np.zeros(n)
        sigma[source] = 1.0
        dist = np.full(n, -1)
        dist[source] = 0
        order = []
        queue = deque([source])
        while queue:
            v = queue.popleft()
            order.append(v)
            for u in graph.neighbors(v):
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    queue.append(u)
                if dist[u] == dist[v] + 1:
                    sigma[u] += sigma[v]
        # dependency accumulation, farthest first
        delta = np.zeros(n)
        for v in reversed(order):
            for u in graph.neighbors(v):
                if dist[u] == dist[v] + 1:
                    delta[v] += sigma[v] / sigma[u] * (1.0 + delta[u])
            if v != source:
                centrality[v] += delta[v]
    return centrality / 2.0


def core_numbers(graph: Graph) -> np.ndarray:
    """K-core number per node via peeling in increasing degree order."""
    n = graph.num_nodes
    deg = degrees(graph).copy()
    core = np.zeros(n, dtype=np.int64)
    order = np.argsort(deg, kind="stable")
    position = np.argsort(order, kind="stable")
    # bucket starts for O(n + m) repositioning
    bins = np.zeros(deg.max() + 2 if n else 1, dtype=np.int64)
    for d in deg:
        bins[d + 1] += 1
    bins = np.cumsum(bins)
    bin_start = bins[:-1].copy()
    order = list(order)
    removed = np.zeros(n, dtype=bool)
    for i in range(n):
        v = order[i]
        core[v] = deg[v]
        removed[v] = True
        for u in graph.neighbors(v):
            if removed[u] or deg[u] <= deg[v]:
                continue
            # swap u to the front of its degree bucket, then shrink it
            du = deg[u]
            pu = position[u]
            pw = bin_start[du]
            w = order[pw]
            if u != w:
                order[pu], order[pw] = w, u
                position[u], position[w] = pw, pu
            bin_start[du] += 1
            deg[u] -= 1
    return core


def local_clustering(graph: Graph) -> np.ndarray:
    """Local clustering coefficient: closed wedge fraction, 0 below degree 2."""
    deg = degrees(graph)
    cn = _common_neighbor_counts(graph)
    triangles = np.zeros(graph.num_nodes)
    np.add.at(triangles, graph.arc_sources(), cn)
    triangles /= 2.0
    denom = deg * (deg - 1) / 2.0
    return np.divide(triangles, denom, out=np.zeros_like(triangles), where=denom > 0)


def heuristic_similarity(graph: Graph, name: str) -> np.ndarray:
    """Named structural similarity per directed arc, min-max normalized."""
    _require_edges(graph)
    if name not in HEURISTIC_NAMES:
        raise ValueError(f"unknown heuristic {name!r}; choose from {HEURISTIC_NAMES}")
    if name == "common_neighbors":
        raw = _common_neighbor_counts(graph)
    elif name == "jaccard":
        cn = _common_neighbor_counts(graph)
        deg = degrees(graph)
        union = deg[graph.arc_sources()] + deg[graph.csr_neighbors] - cn
        raw = np.divide(cn, union, out=np.zeros_like(cn), where=union > 0)
    elif name == "adamic_adar":
        deg = degrees(graph)
        with np.errstate(divide="ignore"):
            inv_log = np.where(deg >= 2, 1.0 / np.log(np.maximum(deg, 2)), 0.0)
        adj = _adjacency(graph)
        raw = _arc_entries(adj @ sp.diags(inv_log) @ adj, graph)
    else:
        per_node = {
            "betweenness_product": betweenness_centrality,
            "kshell_product": lambda g: core_numbers(g).astype(np.float64),
            "clustering_product": local_clustering,
        }[name](graph)
        raw = per_node[graph.arc_sources()] * per_node[graph.csr_neighbors]
    return _minmax_unit(raw)
