"""Experiment configuration and its plain-text ``key = value`` form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

from .attention import DiffusionConfig
from .model import NetworkConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # diffusion and propagation
    alpha: float = 0.4
    xi: float = 1e-3
    lam: float = 0.3
    K: int = 3
    T: int = 2
    # architecture
    heads: int = 8
    hidden: int = 8
    out_heads: int = 1
    activation: str = "elu"
    dropout: float = 0.6
    feature_update: str = "one_step"
    renormalize: bool = False
    mode: str = "auto"
    self_loops: bool = True
    normalize_features: bool = True
    # optimisation
    lr: float = 0.005
    max_epochs: int = 10000
    patience: int = 100
    weight_decay: float = 5e-4
    weight_decay_mode: str = "l2"
    # protocol
    labels_per_class: int = 20
    val_per_class: int = 20
    seeds: list[int] = field(default_factory=lambda: list(range(10)))

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        try:
            self.diffusion()
            if self.dropout < 0 or self.dropout >= 1:
                raise ValueError("dropout must be in [0, 1)")
            if not 0 <= self.lam <= 1:
                raise ValueError("lam must be in [0, 1]")
            if self.K < 1:
                raise ValueError("K must be at least 1")
            if min(self.heads, self.hidden, self.out_heads) < 1:
                raise ValueError("heads, hidden and out_heads must be positive")
            if self.mode not in ("auto", "dense", "masked"):
                raise ValueError(f"mode must be auto, dense or masked, got {self.mode!r}")
            if self.activation not in ("elu", "relu", "none"):
                raise ValueError(f"unknown activation {self.activation!r}")
            if self.feature_update not in ("one_step", "iterate"):
                raise ValueError(f"unknown feature_update {self.feature_update!r}")
            if self.weight_decay_mode not in ("l2", "decoupled"):
                raise ValueError(f"weight_decay_mode must be l2 or decoupled, got {self.weight_decay_mode!r}")
            if self.lr <= 0:
                raise ValueError("lr must be positive")
            if self.patience >= self.max_epochs:
                raise ValueError("patience must be smaller than max_epochs")
            if not self.seeds:
                raise ValueError("at least one seed is required")
            if self.labels_per_class < 1 or self.val_per_class < 0:
                raise ValueError("invalid split sizes")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def diffusion(self) -> DiffusionConfig:
        return DiffusionConfig(alpha=self.alpha, xi=self.xi, T=self.T)

    def network(self, in_dim: int, num_classes: int) -> NetworkConfig:
        return NetworkConfig(
            in_dim=in_dim,
            num_classes=num_classes,
            hidden=self.hidden,
            heads=self.heads,
            out_heads=self.out_heads,
            diffusion=self.diffusion(),
            lam=self.lam,
            K=self.K,
            dropout=self.dropout,
            activation=self.activation,
            feature_update=self.feature_update,
            renormalize=self.renormalize,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def gat_config(base: ExperimentConfig | None = None) -> ExperimentConfig:
    """The degenerate setting that reduces every layer to plain GAT."""
    return (base or ExperimentConfig()).replace(alpha=0.0, xi=0.0, lam=1.0, K=1, T=0)


_BOOL = {"true": True, "1": True, "yes": True, "on": True, "false": False, "0": False, "no": False, "off": False}


def parse_seeds(text: str) -> list[int]:
    """``"5"`` means seeds 0..4; a comma list (``"3,7"`` or ``"7,"``) is taken literally."""
    text = text.strip()
    if "," not in text:
        return list(range(int(text)))
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _convert(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if name == "seeds":
            return parse_seeds(raw)
        if kind is bool or kind == "bool":
            return _BOOL[raw.lower()]
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        return raw.strip("\"'")
    except (KeyError, ValueError):
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None


_FIELDS = {f.name: f.type for f in fields(ExperimentConfig)}
_ALIASES = {"lambda": "lam"}


def canonical_key(key: str) -> str:
    key = key.strip().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def coerce(key: str, raw: str):
    key = canonical_key(key)
    return key, _convert(key, _FIELDS[key], raw)


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        k, v = coerce(key, raw)
        values[k] = v
    return (base or ExperimentConfig()).replace(**values)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "seeds":
            text = ",".join(str(s) for s in v) + ("," if len(v) == 1 else "")
        elif isinstance(v, bool):
            text = "true" if v else "false"
        else:
            text = repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
