"""Plain-numpy reference computations used as test oracles.

Nothing here touches the tape.  The Kronecker-product routines build
``n^2 x n^2`` matrices and are limited to small graphs.
"""
from __future__ import annotations

import numpy as np

from .autodiff import LEAKY_SLOPE

KRON_LIMIT = 64


def _check_small(n: int) -> None:
    if n > KRON_LIMIT:
        raise ValueError(f"n={n} too large for the Kronecker oracle (limit {KRON_LIMIT})")


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorisation."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, n, order="F")


def kron_operator(abar: np.ndarray) -> np.ndarray:
    abar = np.asarray(abar, dtype=np.float64)
    _check_small(abar.shape[0])
    return np.kron(abar, abar)


def vec_diffusion_oracle(g, abar, alpha: float, T: int) -> np.ndarray:
    """``T`` steps of ``vec(S) <- alpha (Abar kron Abar) vec(S) + (1 - alpha) vec(G)``."""
    g = np.asarray(g, dtype=np.float64)
    n = g.shape[0]
    big = kron_operator(abar)
    s = vec(g)
    for _ in range(T):
        s = alpha * big @ s + (1 - alpha) * vec(g)
    return unvec(s, n)


def tpg_step_loops(s, g, abar, alpha: float) -> np.ndarray:
    """Entrywise double sum ``alpha sum_{h,k} Abar_ih S_hk Abar_jk + (1 - alpha) G_ij``."""
    s, g, abar = (np.asarray(x, dtype=np.float64) for x in (s, g, abar))
    n = s.shape[0]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for h in range(n):
                for k in range(n):
                    acc += abar[i, h] * s[h, k] * abar[j, k]
            out[i, j] = alpha * acc + (1 - alpha) * g[i, j]
    return out


def stationary_attention(g, abar, h, alpha: float, xi: float) -> np.ndarray:
    """Fixed point of ``S = alpha Abar S Abar^T + (1 - alpha) G + xi H H^T`` by a direct solve."""
    g = np.asarray(g, dtype=np.float64)
    n = g.shape[0]
    h = np.zeros((n, 1)) if h is None else np.asarray(h, dtype=np.float64)
    rhs = (1 - alpha) * vec(g) + xi * vec(h @ h.T)
    lhs = np.eye(n * n) - alpha * kron_operator(abar)
    return unvec(np.linalg.solve(lhs, rhs), n)


def stationarity_residual(s, g, abar, h, alpha: float, xi: float) -> float:
    """``||vec(S) - alpha A vec(S) - (1-alpha) vec(G + xi/(1-alpha) H H^T)||_inf``."""
    s, g, h = (np.asarray(x, dtype=np.float64) for x in (s, g, h))
    target = g + (xi / (1 - alpha)) * (h @ h.T)
    r = vec(s) - alpha * kron_operator(abar) @ vec(s) - (1 - alpha) * vec(target)
    return float(np.abs(r).max())


def objective_cagat(s, abar, g, mu: float) -> float:
    """``vec(S)^T (I - A) vec(S) + mu ||S - G||_F^2`` with ``A = Abar kron Abar``."""
    s, g = np.asarray(s, dtype=np.float64), np.asarray(g, dtype=np.float64)
    v = vec(s)
    smooth = v @ v - v @ (kron_operator(abar) @ v)
    return float(smooth + mu * np.sum((s - g) ** 2))


def objective_np(h, s, wh, gamma: float) -> float:
    """``Tr(H'^T (I - S) H') + gamma ||H' - WH||_F^2`` for node-major ``H'``."""
    h, s, wh = (np.asarray(x, dtype=np.float64) for x in (h, s, wh))
    if s.shape != (h.shape[0], h.shape[0]) or wh.shape != h.shape:
        raise ValueError("objective_np: shape mismatch")
    smooth = np.trace(h.T @ h) - np.trace(h.T @ s @ h)
    return float(smooth + gamma * np.sum((h - wh) ** 2))


def objective_unified(s, h, abar, g, wh, mu: float, gamma: float, beta: float) -> float:
    return objective_cagat(s, abar, g, mu) + beta * objective_np(h, s, wh, gamma)


def np_closed_form(s, wh, lam: float) -> np.ndarray:
    """``(1 - lam) (I - lam S)^{-1} WH`` by a direct solve."""
    s, wh = np.asarray(s, dtype=np.float64), np.asarray(wh, dtype=np.float64)
    n = s.shape[0]
    rho = np.abs(np.linalg.eigvals(lam * s)).max() if n else 0.0
    if rho >= 1.0:
        raise np.linalg.LinAlgError(f"spectral radius of lam*S is {rho:.4g} >= 1")
    m = np.eye(n) - lam * s
    if np.linalg.cond(m) > 1e12:
        raise np.linalg.LinAlgError("I - lam*S is near-singular")
    return (1 - lam) * np.linalg.solve(m, wh)


def minimize_attention(g, abar, h, mu: float, beta: float) -> np.ndarray:
    """Exact minimiser over S of ``R_CaGAT(S) + beta Tr(H'^T (I - S) H')``.

    Solves ``((1 + mu) I - sym(A)) vec(S) = mu vec(G) + beta/2 vec(H' H'^T)``;
    this coincides with the diffusion fixed point when ``A`` is symmetric.
    """
    g, h = np.asarray(g, dtype=np.float64), np.asarray(h, dtype=np.float64)
    n = g.shape[0]
    big = kron_operator(abar)
    sym = 0.5 * (big + big.T)
    lhs = (1 + mu) * np.eye(n * n) - sym
    rhs = mu * vec(g) + 0.5 * beta * vec(h @ h.T)
    return unvec(np.linalg.solve(lhs, rhs), n)


def minimize_features(s, wh, gamma: float) -> np.ndarray:
    """Exact minimiser over H' of ``Tr(H'^T (I - S) H') + gamma ||H' - WH||^2``.

    With ``lam = 1/(1+gamma)`` and symmetric ``S`` this is the closed form
    ``(1 - lam)(I - lam S)^{-1} WH``.
    """
    s, wh = np.asarray(s, dtype=np.float64), np.asarray(wh, dtype=np.float64)
    n = s.shape[0]
    lhs = (1 + gamma) * np.eye(n) - 0.5 * (s + s.T)
    if np.linalg.eigvalsh(lhs).min() <= 0:
        raise np.linalg.LinAlgError("feature subproblem is not strictly convex")
    return gamma * np.linalg.solve(lhs, wh)


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return x if x >= 0 else slope * x


def gat_layer_loops(features, weight, theta, adjacency) -> np.ndarray:
    """Single-head GAT aggregation ``h'_i = sum_j G_ij W h_j`` with explicit loops.

    ``adjacency`` is a dense 0/1 matrix whose non-zeros define each neighbourhood.
    """
    x = np.asarray(features, dtype=np.float64)
    w = np.asarray(weight, dtype=np.float64)
    th = np.asarray(theta, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    d_out = w.shape[0]
    proj = [w @ x[i] for i in range(n)]
    out = np.zeros((n, d_out))
    for i in range(n):
        nbrs = [j for j in range(n) if adjacency[i, j] != 0]
        scores = [leaky_relu(float(th @ np.concatenate([proj[i], proj[j]]))) for j in nbrs]
        top = max(scores)
        weights = [np.exp(sc - top) for sc in scores]
        z = sum(weights)
        for j, wt in zip(nbrs, weights):
            out[i] += (wt / z) * proj[j]
    return out


def cross_entropy_loops(logits, labels, mask) -> float:
    total = 0.0
    for i in mask:
        row = [float(v) for v in logits[i]]
        top = max(row)
        lse = top + np.log(sum(np.exp(v - top) for v in row))
        total += lse - row[labels[i]]
    return total / len(mask)
