"""Edge attention: GAT scoring, tensor-product-graph diffusion and the
feature-coupled update, in a dense (exact) and a masked (on-pattern) mode.

All functions here are differentiable: they are built from the primitives in
:mod:`cagat.autodiff` and record onto the active tape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import SparseMatrix, SparsePattern, Var
from .graph import DiffusionMatrix, Graph, add_self_loops, row_normalize

DENSE_LIMIT = 500


@dataclass
class AttentionMatrix:
    """Attention values, either a dense ``n x n`` Var or one value per pattern entry."""

    values: Var
    pattern: SparsePattern | None = None

    @property
    def mode(self) -> str:
        return "dense" if self.pattern is None else "masked"

    @property
    def n(self) -> int:
        return self.values.shape[0] if self.pattern is None else self.pattern.n_rows

    def toarray(self) -> np.ndarray:
        if self.pattern is None:
            return self.values.value.copy()
        return self.pattern.densify(self.values.value)


@dataclass(frozen=True)
class DiffusionConfig:
    alpha: float = 0.4
    xi: float = 1e-3
    T: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")
        if self.T < 0:
            raise ValueError("T must be non-negative")

    @property
    def mu(self) -> float:
        return np.inf if self.alpha == 0 else 1.0 / self.alpha - 1.0

    @property
    def beta(self) -> float:
        if self.alpha == 0:
            return 0.0 if self.xi == 0 else np.inf
        return 2.0 * self.mu * self.xi / (1.0 - self.alpha)


class GraphContext:
    """Per-graph constants shared by every layer: the attention pattern and ``D^-1 A``.

    ``mode="auto"`` picks dense for graphs of at most ``DENSE_LIMIT`` nodes.
    """

    def __init__(self, graph: Graph, mode: str = "auto", self_loops: bool = True):
        if self_loops:
            graph = add_self_loops(graph)
        if mode == "auto":
            mode = "dense" if graph.n <= DENSE_LIMIT else "masked"
        if mode not in ("dense", "masked"):
            raise ValueError(f"unknown diffusion mode {mode!r}")
        self.graph = graph
        self.mode = mode
        self.pattern = graph.adjacency
        self.abar: DiffusionMatrix = row_normalize(graph)
        self.abar_csr = self.abar.to_scipy()
        self._abar_dense: np.ndarray | None = None
        self._operator: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def abar_dense(self) -> np.ndarray:
        if self._abar_dense is None:
            self._abar_dense = self.abar.toarray()
        return self._abar_dense

    @property
    def diffusion_operator(self) -> sp.csr_matrix:
        if self._operator is None:
            self._operator = masked_diffusion_operator(self.pattern, self.abar.values)
        return self._operator


def _ragged_positions(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(s, s + c)`` for each start/count pair."""
    offsets = np.cumsum(counts) - counts
    return np.arange(counts.sum()) - np.repeat(offsets - starts, counts)


def masked_diffusion_operator(pattern: SparsePattern, weights, max_candidates: int = 4_000_000) -> sp.csr_matrix:
    """The ``nnz x nnz`` matrix mapping ``S`` on the pattern to ``Abar S Abar^T`` on the pattern.

    Entry ``((i, j), (h, k))`` is ``Abar_ih * Abar_jk``; ``weights`` are the
    values of ``Abar`` in pattern order.
    """
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    n = pattern.n_rows
    indptr, indices, deg = pattern.indptr, pattern.indices, pattern.degree()
    keys = pattern.row * n + indices
    per_edge = deg[pattern.row] * deg[indices]
    bounds = np.searchsorted(np.cumsum(per_edge), np.arange(max_candidates, per_edge.sum(), max_candidates))
    rows, cols, vals = [], [], []
    for e in np.split(np.arange(pattern.nnz), np.unique(bounds)):
        i, j = pattern.row[e], indices[e]
        pos_h = _ragged_positions(indptr[i], deg[i])
        e1, j1 = np.repeat(e, deg[i]), np.repeat(j, deg[i])
        pos_k = _ragged_positions(indptr[j1], deg[j1])
        e2 = np.repeat(e1, deg[j1])
        pos_h2 = np.repeat(pos_h, deg[j1])
        key = indices[pos_h2] * n + indices[pos_k]
        loc = np.minimum(np.searchsorted(keys, key), keys.size - 1)
        hit = keys[loc] == key
        rows.append(e2[hit])
        cols.append(loc[hit])
        vals.append(weights[pos_h2[hit]] * weights[pos_k[hit]])
    op = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(pattern.nnz, pattern.nnz)
    )
    op.sum_duplicates()
    return op


def _edge_logits(xw: Var, theta: Var, pattern: SparsePattern) -> Var:
    d = xw.shape[1]
    if theta.shape != (2 * d, 1):
        raise ad.ShapeError(f"theta must have shape {(2 * d, 1)}, got {theta.shape}")
    # theta^T [a || b] = theta_src^T a + theta_dst^T b
    src = xw @ ad.slice_rows(theta, 0, d)
    dst = xw @ ad.slice_rows(theta, d, 2 * d)
    return ad.leaky_relu(ad.gather_rows(src, pattern.row) + ad.gather_rows(dst, pattern.indices))


def attention_logits(features, weight: Var, theta: Var, pattern: SparsePattern) -> Var:
    """Per-entry scores ``LeakyReLU(theta^T [W h_i || W h_j])``, shape ``(nnz, 1)``.

    ``weight`` is ``d_out x d_in`` and ``features`` is node-major ``n x d_in``.
    """
    features = ad.as_var(features)
    if features.shape[1] != weight.shape[1]:
        raise ad.ShapeError(f"features {features.shape} do not match W {weight.shape}")
    return _edge_logits(features @ weight.T, theta, pattern)


def attention_from_projection(xw, theta, ctx, dropout=0.0, rng=None) -> AttentionMatrix:
    g = ad.segment_softmax(ctx.pattern, _edge_logits(xw, theta, ctx.pattern))
    g = ad.dropout(g, dropout, rng)
    if ctx.mode == "dense":
        return AttentionMatrix(ad.to_dense(SparseMatrix(ctx.pattern, g)))
    return AttentionMatrix(g, ctx.pattern)


def gat_attention(features, weight: Var, theta: Var, ctx: GraphContext) -> AttentionMatrix:
    """Neighbourhood-softmax attention ``G``; rows sum to one."""
    features = ad.as_var(features)
    if features.shape[1] != weight.shape[1]:
        raise ad.ShapeError(f"features {features.shape} do not match W {weight.shape}")
    return attention_from_projection(features @ weight.T, theta, ctx)


def _check_modes(*mats: AttentionMatrix) -> None:
    if len({m.mode for m in mats}) != 1:
        raise ValueError("attention matrices mix dense and masked modes")
    patterns = [m.pattern for m in mats if m.pattern is not None]
    if any(p is not patterns[0] and p != patterns[0] for p in patterns[1:]):
        raise ValueError("attention matrices live on different patterns")


def _context_term(s: AttentionMatrix, abar) -> Var:
    """``Abar S Abar^T`` (restricted to the pattern in masked mode).

    ``abar`` may be a :class:`GraphContext` (uses its cached operators), a
    :class:`DiffusionMatrix`, a dense array or a scipy sparse matrix.
    """
    if isinstance(abar, GraphContext):
        if s.pattern is None:
            return ad.sandwich(abar.abar_csr, s.values)
        if s.pattern is abar.pattern or s.pattern == abar.pattern:
            return ad.sparse_linear(abar.diffusion_operator, s.values)
        abar = abar.abar_csr
    if isinstance(abar, DiffusionMatrix):
        abar = abar.to_scipy()
    if s.pattern is None:
        a = abar if sp.issparse(abar) else np.asarray(abar, dtype=np.float64)
        if a.shape != s.values.shape:
            raise ad.ShapeError(f"diffusion matrix {a.shape} vs attention {s.values.shape}")
        return ad.sandwich(a, s.values)
    return ad.masked_sandwich(s.pattern, sp.csr_matrix(abar), s.values)


def tpg_step(s: AttentionMatrix, g: AttentionMatrix, abar, alpha: float) -> AttentionMatrix:
    """One diffusion step ``S <- alpha Abar S Abar^T + (1 - alpha) G``."""
    _check_modes(s, g)
    if alpha == 0:
        return AttentionMatrix(g.values, g.pattern)
    out = ad.scale(_context_term(s, abar), alpha) + ad.scale(g.values, 1.0 - alpha)
    return AttentionMatrix(out, s.pattern)


def tpg_diffuse(g: AttentionMatrix, abar, alpha: float, T: int) -> AttentionMatrix:
    """``T`` diffusion steps starting from ``S = G``."""
    if T < 0:
        raise ValueError("T must be non-negative")
    s = g
    for _ in range(T):
        s = tpg_step(s, g, abar, alpha)
    return s


def gram(h: Var, pattern: SparsePattern | None = None) -> Var:
    """Node-by-node inner products ``H H^T``, or only their pattern entries."""
    if pattern is None:
        return h @ h.T
    return ad.masked_gram(pattern, h)


def unified_step(
    s: AttentionMatrix,
    g: AttentionMatrix,
    abar,
    h: Var,
    alpha: float,
    xi: float,
) -> AttentionMatrix:
    """Diffusion step with the feature coupling ``+ xi * Gram(H')``."""
    step = tpg_step(s, g, abar, alpha)
    if xi == 0:
        return step
    h = ad.as_var(h)
    if h.shape[0] != s.n:
        raise ad.ShapeError(f"embedding has {h.shape[0]} rows, attention is {s.n} x {s.n}")
    return AttentionMatrix(step.values + ad.scale(gram(h, s.pattern), xi), s.pattern)


def renormalize(s: AttentionMatrix) -> AttentionMatrix:
    if s.pattern is None:
        return AttentionMatrix(ad.normalize_rows(s.values))
    return AttentionMatrix(ad.segment_normalize(s.pattern, s.values), s.pattern)


def aggregate(s: AttentionMatrix, x: Var) -> Var:
    """``S X`` for node-major ``X``."""
    if s.pattern is None:
        return s.values @ x
    return ad.spmm(SparseMatrix(s.pattern, s.values), x)


def np_truncated(s: AttentionMatrix, wh, lam: float, T: int) -> Var:
    """``T`` rounds of ``H' <- lam S H' + (1 - lam) WH`` from ``H' = WH``.

    Equals ``[(lam S)^T + (1 - lam) sum_{t<T} (lam S)^t] WH``.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    wh = ad.as_var(wh)
    h = wh
    for _ in range(T):
        h = ad.scale(aggregate(s, h), lam) + ad.scale(wh, 1.0 - lam)
    return h
