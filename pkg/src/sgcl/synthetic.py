"""Small deterministic graph generators for tests, smoke runs, and the
self-check property suite. Real benchmarks arrive via SGR1 files; these exist
so the engine can prove itself without any dataset on disk."""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .errors import ConfigError
from .graph import Graph
from .linalg import SparseCSR


def graph_from_edges(
    n: int,
    edges: Iterable[tuple[int, int]],
    features: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    num_classes: int = 0,
    name: str = "synthetic",
) -> Graph:
    """Build an undirected graph from (u, v) pairs; duplicates and self-loops
    are dropped, symmetry is enforced."""
    pairs = {(min(u, v), max(u, v)) for u, v in edges if u != v}
    if features is None:
        features = np.eye(n, dtype=np.float32)
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        r = np.concatenate([arr[:, 0], arr[:, 1]])
        c = np.concatenate([arr[:, 1], arr[:, 0]])
        adj = SparseCSR.from_edges(n, n, r, c, np.ones(len(r)))
    else:
        adj = SparseCSR.empty(n, n)
    return Graph(adj, features, labels=labels, num_classes=num_classes, name=name)


def path_graph(n: int, features: np.ndarray | None = None) -> Graph:
    return graph_from_edges(n, [(i, i + 1) for i in range(n - 1)], features, name=f"path{n}")


def cycle_graph(n: int) -> Graph:
    return graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)], name=f"cycle{n}")


def complete_graph(n: int) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return graph_from_edges(n, edges, name=f"complete{n}")


def random_graph(n: int, p: float, seed: int, feature_dim: int = 8) -> Graph:
    """Erdos-Renyi graph with standard-normal features; may contain isolated
    nodes, which downstream code must tolerate."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"edge probability {p} outside [0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(len(iu)) < p
    edges = list(zip(iu[mask].tolist(), ju[mask].tolist()))
    features = rng.normal(size=(n, feature_dim)).astype(np.float32)
    return graph_from_edges(n, edges, features, name=f"er{n}")


def two_block_graph(
    n: int,
    p_in: float = 0.6,
    p_out: float = 0.05,
    seed: int = 0,
    feature_dim: int = 8,
    feature_gap: float = 3.0,
) -> Graph:
    """Two-community stochastic block model with class-shifted Gaussian
    features; labeled, so probes and clustering have ground truth."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=np.int32)
    labels[n // 2:] = 1
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    mask = rng.random(len(iu)) < prob
    edges = list(zip(iu[mask].tolist(), ju[mask].tolist()))
    centers = np.zeros((2, feature_dim))
    centers[0, : feature_dim // 2] = feature_gap
    centers[1, feature_dim // 2:] = feature_gap
    features = (centers[labels] + rng.normal(size=(n, feature_dim))).astype(np.float32)
    return graph_from_edges(
        n, edges, features, labels=labels, num_classes=2, name=f"sbm{n}")
