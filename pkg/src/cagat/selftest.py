"""Randomised oracle checks shared by the ``selftest`` command and the demos."""
from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import reference as ref
from .attention import AttentionMatrix, DiffusionConfig, GraphContext, np_truncated, tpg_diffuse, unified_step
from .graph import build_graph
from .model import CaGATLayer, CaGATNetwork, LayerConfig, NetworkConfig


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    seconds: float
    # "below": pass when value < tolerance; "above": pass when value > tolerance
    direction: str = "below"

    @property
    def passed(self) -> bool:
        if self.direction == "above":
            return self.value > self.tolerance
        return self.value < self.tolerance


def random_graph(n: int, rng: np.random.Generator, p: float = 0.4):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return build_graph(n, np.argwhere(upper))


def random_attention(ctx: GraphContext, rng: np.random.Generator) -> np.ndarray:
    """Row-stochastic matrix on the context's pattern (softmax of random scores)."""
    logits = ad.Var(rng.normal(size=(ctx.pattern.nnz, 1)))
    return ctx.pattern.densify(ad.segment_softmax(ctx.pattern, logits).value)


def cycle_graph(n: int):
    return build_graph(n, [(i, (i + 1) % n) for i in range(n)])


def kronecker_equivalence(rng, instances: int = 50) -> float:
    worst = 0.0
    alphas = (0.0, 0.4, 0.9)
    for k in range(instances):
        n = int(rng.integers(2, 9))
        T = int(rng.integers(0, 6))
        alpha = alphas[k % 3]
        ctx = GraphContext(random_graph(n, rng), mode="dense")
        g = random_attention(ctx, rng)
        s = tpg_diffuse(AttentionMatrix(ad.Var(g)), ctx.abar_dense, alpha, T).values.value
        worst = max(worst, float(np.abs(s - ref.vec_diffusion_oracle(g, ctx.abar_dense, alpha, T)).max()))
    return worst


def fixed_point_residual(rng, instances: int = 10, alpha: float = 0.4, xi: float = 0.05) -> float:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(3, 9))
        ctx = GraphContext(random_graph(n, rng), mode="dense")
        g = AttentionMatrix(ad.Var(random_attention(ctx, rng)))
        h = ad.Var(rng.normal(size=(n, 3)))
        s = g
        for _ in range(1000):
            nxt = unified_step(s, g, ctx.abar_dense, h, alpha, xi)
            delta = np.abs(nxt.values.value - s.values.value).max()
            s = nxt
            if delta < 1e-15:
                break
        r = ref.stationarity_residual(s.values.value, g.values.value, ctx.abar_dense, h.value, alpha, xi)
        worst = max(worst, r)
    return worst


def np_equivalence(rng, instances: int = 10, lam: float = 0.3) -> float:
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(3, 12))
        s = rng.random((n, n))
        s /= s.sum(axis=1, keepdims=True)
        wh = rng.normal(size=(n, 4))
        approx = np_truncated(AttentionMatrix(ad.Var(s)), wh, lam, 200).value
        worst = max(worst, float(np.abs(approx - ref.np_closed_form(s, wh, lam)).max()))
    return worst


def toy_network(rng, n: int = 10, d: int = 5, c: int = 3, mode: str = "dense"):
    graph = random_graph(n, rng, p=0.3)
    ctx = GraphContext(graph, mode=mode)
    cfg = NetworkConfig(in_dim=d, num_classes=c, hidden=3, heads=2, out_heads=1, dropout=0.0)
    net = CaGATNetwork(cfg, rng)
    x = rng.normal(size=(n, d))
    labels = rng.integers(0, c, size=n)
    return net, ctx, x, labels


def model_gradcheck(rng, mode: str = "dense") -> float:
    net, ctx, x, labels = toy_network(rng, mode=mode)
    mask = np.arange(10)

    def loss():
        return ad.masked_cross_entropy(net(x, ctx), labels, mask)

    return ad.grad_check(loss, list(net.store))


def gat_degeneracy(rng, instances: int = 5) -> float:
    worst = 0.0
    for _ in range(instances):
        n, d, dd = int(rng.integers(3, 10)), 4, 3
        graph = random_graph(n, rng)
        cfg = LayerConfig(d, dd, heads=1, activation="none", diffusion=DiffusionConfig(0.0, 0.0, 0),
                          lam=1.0, K=1)
        for mode in ("dense", "masked"):
            ctx = GraphContext(graph, mode=mode)
            layer = CaGATLayer(cfg, ad.ParamStore(), rng, "gat")
            x = rng.normal(size=(n, d))
            out = layer.forward(x, ctx).value
            dense_adj = ctx.pattern.densify(np.ones(ctx.pattern.nnz))
            expect = ref.gat_layer_loops(x, layer.weights[0].value, layer.thetas[0].value, dense_adj)
            worst = max(worst, float(np.abs(out - expect).max()))
    return worst


def alternation_objectives(rng, n: int = 6, rounds: int = 5, alpha: float = 0.4, xi: float = 0.01,
                           lam: float = 0.3) -> list[float]:
    """Objective values after each half-step of exact alternating minimisation.

    Uses a cycle graph (so ``D^-1 A`` is symmetric) and a symmetric ``G`` so that
    the feature step is exactly the closed form ``(1-lam)(I - lam S)^-1 WH``.
    """
    ctx = GraphContext(cycle_graph(n), mode="dense")
    abar = ctx.abar_dense
    g = random_attention(ctx, rng)
    g = 0.5 * (g + g.T)
    wh = rng.normal(size=(n, 3))
    mu = 1.0 / alpha - 1.0
    beta = 2.0 * mu * xi / (1.0 - alpha)
    gamma = 1.0 / lam - 1.0
    h = wh.copy()
    s = g.copy()
    values = [ref.objective_unified(s, h, abar, g, wh, mu, gamma, beta)]
    for _ in range(rounds):
        s = ref.minimize_attention(g, abar, h, mu, beta)
        values.append(ref.objective_unified(s, h, abar, g, wh, mu, gamma, beta))
        h = ref.np_closed_form(s, wh, lam)
        values.append(ref.objective_unified(s, h, abar, g, wh, mu, gamma, beta))
    return values


def max_increase(values: list[float]) -> float:
    return max(0.0, max(b - a for a, b in zip(values, values[1:])))


def run_selftest(seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    checks = [
        ("kronecker equivalence (50 instances)", lambda r: kronecker_equivalence(r), 1e-12),
        ("fixed-point residual", lambda r: fixed_point_residual(r), 1e-8),
        ("NP truncated vs closed form", lambda r: np_equivalence(r), 1e-8),
        ("GAT degeneracy", lambda r: gat_degeneracy(r), 1e-12),
        ("monotone alternation (max increase)", lambda r: max_increase(alternation_objectives(r)), 1e-10),
        ("model gradcheck, dense", lambda r: model_gradcheck(r, "dense"), 1e-4),
        ("model gradcheck, masked", lambda r: model_gradcheck(r, "masked"), 1e-4),
    ]
    results = []
    for i, (name, fn, tol) in enumerate(checks):
        rng = np.random.default_rng([seed, i])
        guard = ad.corrupt_backward("matmul") if corrupt and "gradcheck" in name else nullcontext()
        start = time.perf_counter()
        with guard:
            value = fn(rng)
        results.append(CheckResult(name, value, tol, time.perf_counter() - start))
    return results


def format_report(results: list[CheckResult], seed: int) -> str:
    lines = [f"selftest seed={seed}", f"{'check':<40} {'value':>12} {'tolerance':>10}  status"]
    for r in results:
        lines.append(f"{r.name:<40} {r.value:>12.3e} {r.tolerance:>10.0e}  {'PASS' if r.passed else 'FAIL'}")
    ok = sum(r.passed for r in results)
    lines.append(f"{ok}/{len(results)} checks passed")
    return "\n".join(lines)
