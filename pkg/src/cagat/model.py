"""CaGAT layers and the two-layer node classifier."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import (
    DiffusionConfig,
    GraphContext,
    attention_from_projection,
    aggregate,
    renormalize,
    unified_step,
)
from .autodiff import ParamStore, Var

ACTIVATIONS = {"elu": ad.elu, "relu": ad.relu, "none": lambda x: x}


@dataclass(frozen=True)
class LayerConfig:
    in_dim: int
    out_dim: int
    heads: int = 1
    merge: str = "concat"
    activation: str = "elu"
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    lam: float = 0.3
    K: int = 3
    dropout: float = 0.0
    attn_dropout: float = 0.0
    # "one_step": H' <- lam S WH + (1-lam) WH each outer round
    # "iterate":  H' <- lam S H' + (1-lam) WH (Neumann iteration on H')
    feature_update: str = "one_step"
    renormalize: bool = False

    def __post_init__(self):
        if self.merge not in ("concat", "mean"):
            raise ValueError(f"merge must be 'concat' or 'mean', got {self.merge!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.feature_update not in ("one_step", "iterate"):
            raise ValueError(f"unknown feature_update {self.feature_update!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.heads < 1 or self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("dimensions and head count must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")

    @property
    def output_dim(self) -> int:
        return self.out_dim * self.heads if self.merge == "concat" else self.out_dim


class CaGATLayer:
    def __init__(self, config: LayerConfig, store: ParamStore, rng: np.random.Generator, prefix: str):
        self.config = config
        self.prefix = prefix
        self.weights: list[Var] = []
        self.thetas: list[Var] = []
        for h in range(config.heads):
            self.weights.append(store.add(f"{prefix}.head{h}.W", ad.glorot_init(config.out_dim, config.in_dim, rng)))
            self.thetas.append(store.add(f"{prefix}.head{h}.theta", ad.glorot_init(2 * config.out_dim, 1, rng)))

    def head_forward(self, x: Var, head: int, ctx: GraphContext, rng=None) -> Var:
        """Pre-activation output of one head (the body of the layer algorithm)."""
        cfg = self.config
        diff = cfg.diffusion
        lam = cfg.lam
        xw = x @ self.weights[head].T
        g = attention_from_projection(xw, self.thetas[head], ctx, cfg.attn_dropout, rng)
        h = ad.scale(aggregate(g, xw), lam) + ad.scale(xw, 1.0 - lam)
        s = g
        for _ in range(cfg.K):
            for _ in range(diff.T):
                s = unified_step(s, g, ctx, h, diff.alpha, diff.xi)
            if cfg.renormalize:
                s = renormalize(s)
            base = xw if cfg.feature_update == "one_step" else h
            h = ad.scale(aggregate(s, base), lam) + ad.scale(xw, 1.0 - lam)
        return h

    def forward(self, x, ctx: GraphContext, rng: np.random.Generator | None = None) -> Var:
        """Layer output; dropout is active only when ``rng`` is given."""
        cfg = self.config
        x = ad.as_var(x)
        if x.shape[1] != cfg.in_dim:
            raise ad.ShapeError(f"layer expects {cfg.in_dim} input features, got {x.shape[1]}")
        x = ad.dropout(x, cfg.dropout, rng)
        outs = [self.head_forward(x, h, ctx, rng) for h in range(cfg.heads)]
        if cfg.merge == "concat":
            merged = outs[0] if len(outs) == 1 else ad.concat_cols(outs)
        else:
            merged = outs[0]
            for o in outs[1:]:
                merged = merged + o
            merged = ad.scale(merged, 1.0 / len(outs)) if len(outs) > 1 else merged
        return ACTIVATIONS[cfg.activation](merged)


def layer_forward(layer: CaGATLayer, features, ctx: GraphContext, rng=None) -> Var:
    return layer.forward(features, ctx, rng)


@dataclass(frozen=True)
class NetworkConfig:
    in_dim: int
    num_classes: int
    hidden: int = 8
    heads: int = 8
    out_heads: int = 1
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    lam: float = 0.3
    K: int = 3
    dropout: float = 0.6
    activation: str = "elu"
    feature_update: str = "one_step"
    renormalize: bool = False

    def layer_configs(self) -> list[LayerConfig]:
        shared = dict(
            diffusion=self.diffusion,
            lam=self.lam,
            K=self.K,
            dropout=self.dropout,
            attn_dropout=self.dropout,
            feature_update=self.feature_update,
            renormalize=self.renormalize,
        )
        hidden = LayerConfig(self.in_dim, self.hidden, self.heads, "concat", self.activation, **shared)
        output = LayerConfig(hidden.output_dim, self.num_classes, self.out_heads, "mean", "none", **shared)
        return [hidden, output]


class CaGATNetwork:
    """Stack of CaGAT layers ending in ``num_classes`` averaged-head logits."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator):
        self.config = config
        self.store = ParamStore()
        self.layers = [
            CaGATLayer(lc, self.store, rng, prefix=f"layer{i}") for i, lc in enumerate(config.layer_configs())
        ]

    @classmethod
    def from_layers(cls, layer_configs: list[LayerConfig], rng: np.random.Generator) -> "CaGATNetwork":
        for a, b in zip(layer_configs, layer_configs[1:]):
            if a.output_dim != b.in_dim:
                raise ValueError(f"layer output {a.output_dim} does not feed input {b.in_dim}")
        net = cls.__new__(cls)
        net.config = None
        net.store = ParamStore()
        net.layers = [CaGATLayer(lc, net.store, rng, prefix=f"layer{i}") for i, lc in enumerate(layer_configs)]
        return net

    @property
    def num_classes(self) -> int:
        return self.layers[-1].config.output_dim

    def forward(self, features, ctx: GraphContext, rng: np.random.Generator | None = None) -> Var:
        x = ad.as_var(features)
        for layer in self.layers:
            x = layer.forward(x, ctx, rng)
        return x

    __call__ = forward


def network_forward(net: CaGATNetwork, bundle, ctx: GraphContext | None = None, rng=None) -> Var:
    if ctx is None:
        ctx = GraphContext(bundle.graph)
    return net.forward(bundle.features, ctx, rng)
