"""Graph containers, normalisation and train/validation/test splits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .autodiff import SparseMatrix, SparsePattern


@dataclass(frozen=True)
class Graph:
    """Undirected graph with a symmetric 0/1 adjacency.

    ``edges`` holds each undirected pair once as ``(i, j)`` with ``i < j``;
    self-loops are never listed there and are tracked by ``with_self_loops``.
    """

    n: int
    edges: np.ndarray
    adjacency: SparsePattern
    with_self_loops: bool = False

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def adjacency_matrix(self) -> sp.csr_matrix:
        return self.adjacency.csr(np.ones(self.adjacency.nnz))

    def degree(self) -> np.ndarray:
        return self.adjacency.degree()

    def permute(self, perm: np.ndarray) -> "Graph":
        """Relabel node ``perm[i]`` as ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        g = build_graph(self.n, inv[self.edges])
        return add_self_loops(g) if self.with_self_loops else g


def _pattern(n: int, pairs: np.ndarray, self_loops: bool) -> SparsePattern:
    rows = [pairs[:, 0], pairs[:, 1]]
    cols = [pairs[:, 1], pairs[:, 0]]
    if self_loops:
        rows.append(np.arange(n))
        cols.append(np.arange(n))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    m = sp.csr_matrix((np.ones(r.size), (r, c)), shape=(n, n))
    return SparsePattern.from_scipy(m)


def build_graph(n: int, edge_list) -> Graph:
    """Symmetrised, de-duplicated graph from an edge list; self-edges are rejected."""
    pairs = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
        raise ValueError(f"edge endpoint out of range [0, {n})")
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("self-edges are not allowed in the edge list; use add_self_loops")
    pairs = np.sort(pairs, axis=1)
    pairs = np.unique(pairs, axis=0) if pairs.size else pairs
    return Graph(n=n, edges=pairs, adjacency=_pattern(n, pairs, False))


def add_self_loops(g: Graph) -> Graph:
    if g.with_self_loops:
        return g
    return Graph(n=g.n, edges=g.edges, adjacency=_pattern(g.n, g.edges, True), with_self_loops=True)


@dataclass(frozen=True)
class DiffusionMatrix:
    """Row-stochastic ``D^-1 A`` stored on the adjacency pattern."""

    pattern: SparsePattern
    values: np.ndarray

    def to_scipy(self) -> sp.csr_matrix:
        return self.pattern.csr(self.values)

    def toarray(self) -> np.ndarray:
        return self.pattern.densify(self.values)

    def as_sparse(self) -> SparseMatrix:
        return SparseMatrix(self.pattern, self.values.reshape(-1, 1))


def row_normalize(g: Graph) -> DiffusionMatrix:
    deg = g.degree()
    if np.any(deg == 0):
        raise ValueError("zero-degree row; add self-loops before normalising")
    values = 1.0 / deg[g.adjacency.row]
    return DiffusionMatrix(g.adjacency, values)


def normalize_features(x: np.ndarray) -> np.ndarray:
    """Scale every row to unit L1 norm; all-zero rows are left unchanged."""
    x = np.asarray(x, dtype=np.float64)
    s = np.abs(x).sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return x / s


@dataclass
class DatasetBundle:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "unnamed"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.graph.n
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"features must have {n} rows, got shape {self.features.shape}")
        if self.labels.shape != (n,):
            raise ValueError(f"expected {n} labels, got {self.labels.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        counts = np.bincount(self.labels, minlength=self.num_classes)
        if np.any(counts == 0):
            raise ValueError(f"empty class(es): {np.flatnonzero(counts == 0).tolist()}")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_splits(
    bundle: DatasetBundle,
    labels_per_class: int,
    rng: np.random.Generator,
    val_per_class: int = 20,
) -> SplitMasks:
    """Sample ``labels_per_class`` training and ``val_per_class`` validation nodes per class."""
    train, val = [], []
    for c in range(bundle.num_classes):
        members = np.flatnonzero(bundle.labels == c)
        need = labels_per_class + val_per_class
        if members.size < need:
            raise ValueError(f"class {c} has {members.size} nodes, needs at least {need}")
        picked = rng.choice(members, size=need, replace=False)
        train.append(picked[:labels_per_class])
        val.append(picked[labels_per_class:])
    train = np.sort(np.concatenate(train))
    val = np.sort(np.concatenate(val))
    rest = np.ones(bundle.n, dtype=bool)
    rest[train] = False
    rest[val] = False
    return SplitMasks(train=train, val=val, test=np.flatnonzero(rest))
