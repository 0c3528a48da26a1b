"""Synthetic graphs for demos and tests."""
from __future__ import annotations

import numpy as np

from .graph import DatasetBundle, build_graph


def two_cliques(size: int = 25, num_features: int = 8, noise: float = 0.5, seed: int = 0) -> DatasetBundle:
    """Two disjoint cliques joined by one bridge edge, one class per clique."""
    rng = np.random.default_rng(seed)
    edges = []
    for block in range(2):
        base = block * size
        edges += [(base + i, base + j) for i in range(size) for j in range(i + 1, size)]
    edges.append((size - 1, size))
    labels = np.repeat([0, 1], size)
    centers = rng.normal(size=(2, num_features))
    features = centers[labels] + noise * rng.normal(size=(2 * size, num_features))
    return DatasetBundle(build_graph(2 * size, edges), features, labels, 2, name="two-cliques")


def planted_partition(
    nodes_per_class: int = 60,
    num_classes: int = 3,
    num_features: int = 50,
    p_in: float = 0.08,
    p_out: float = 0.01,
    words_per_node: int = 6,
    signal: float = 0.5,
    seed: int = 0,
) -> DatasetBundle:
    """Citation-like stochastic block model with sparse bag-of-words features.

    Each class owns a block of vocabulary; a node draws ``words_per_node``
    words, each from its class block with probability ``signal`` and from
    the whole vocabulary otherwise.
    """
    rng = np.random.default_rng(seed)
    n = nodes_per_class * num_classes
    labels = np.repeat(np.arange(num_classes), nodes_per_class)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    edges = np.argwhere(upper)

    block = max(1, num_features // num_classes)
    features = np.zeros((n, num_features))
    for i in range(n):
        for _ in range(words_per_node):
            if rng.random() < signal:
                w = labels[i] * block + rng.integers(block)
            else:
                w = rng.integers(num_features)
            features[i, min(w, num_features - 1)] = 1.0
    return DatasetBundle(build_graph(n, edges), features, labels, num_classes, name="planted-partition")
