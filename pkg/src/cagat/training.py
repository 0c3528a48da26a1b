"""Full-batch semi-supervised training, repeated-seed evaluation and sweeps."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import GraphContext
from .config import ExperimentConfig
from .graph import DatasetBundle, SplitMasks, make_splits, normalize_features
from .model import CaGATNetwork

log = logging.getLogger(__name__)

SWEEP_AXES = {"alpha": "alpha", "lam": "lam", "lambda": "lam", "xi": "xi"}


class TrainingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    max_epochs: int = 10000
    patience: int = 100
    weight_decay: float = 5e-4
    weight_decay_mode: str = "l2"

    @classmethod
    def from_experiment(cls, cfg: ExperimentConfig) -> "TrainConfig":
        return cls(cfg.lr, cfg.max_epochs, cfg.patience, cfg.weight_decay, cfg.weight_decay_mode)


@dataclass
class RunResult:
    seed: int
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    stop_epoch: int
    test_accuracy: float
    val_accuracy: float
    wall_time: float

    @property
    def final_train_loss(self) -> float:
        return self.train_loss[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


@dataclass
class AggregateResult:
    mean: float
    std: float
    runs: list[RunResult] = field(default_factory=list)

    @classmethod
    def from_runs(cls, runs: list[RunResult]) -> "AggregateResult":
        runs = sorted(runs, key=lambda r: r.seed)
        acc = np.array([r.test_accuracy for r in runs])
        std = float(acc.std(ddof=1)) if acc.size > 1 else 0.0
        return cls(mean=float(acc.mean()), std=std, runs=runs)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "runs": [r.to_dict() for r in self.runs]}

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateResult":
        return cls(d["mean"], d["std"], [RunResult.from_dict(r) for r in d["runs"]])


@dataclass
class SweepRow:
    axis: str
    value: float
    result: AggregateResult

    def to_dict(self) -> dict:
        return {"axis": self.axis, "value": self.value, "result": self.result.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepRow":
        return cls(d["axis"], d["value"], AggregateResult.from_dict(d["result"]))


def accuracy(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    return float(np.mean(logits[idx].argmax(axis=1) == labels[idx]))


def train_once(
    net: CaGATNetwork,
    bundle: DatasetBundle,
    masks: SplitMasks,
    config: TrainConfig,
    rng: np.random.Generator,
    ctx: GraphContext | None = None,
    seed: int = -1,
) -> RunResult:
    """Train until validation loss has not reached a new minimum for ``patience`` epochs.

    The network is left holding the parameters of the best-validation epoch,
    and the reported test accuracy is the one measured at that epoch.
    """
    ctx = ctx or GraphContext(bundle.graph)
    x, y = bundle.features, bundle.labels
    store = net.store
    decoupled = config.weight_decay_mode == "decoupled"
    train_curve, val_curve = [], []
    best = (np.inf, 0, 0.0, 0.0)  # val loss, epoch, val acc, test acc
    best_params = store.snapshot()
    bad = 0
    start = time.perf_counter()
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        try:
            with ad.Tape() as tape:
                loss = ad.masked_cross_entropy(net(x, ctx, rng), y, masks.train)
            tape.backward(loss)
            ad.adam_step(store, config.lr, weight_decay=config.weight_decay, decoupled=decoupled)
            logits = net(x, ctx)
            val_loss = ad.masked_cross_entropy(logits, y, masks.val).item()
        except ad.NumericError as exc:
            raise TrainingError(f"epoch {epoch}: {exc}") from exc
        train_curve.append(loss.item())
        val_curve.append(val_loss)
        if val_loss < best[0]:
            lv = logits.value
            best = (val_loss, epoch, accuracy(lv, y, masks.val), accuracy(lv, y, masks.test))
            best_params = store.snapshot()
            bad = 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    store.load(best_params)
    return RunResult(
        seed=seed,
        train_loss=train_curve,
        val_loss=val_curve,
        best_epoch=best[1],
        stop_epoch=epoch,
        test_accuracy=best[3],
        val_accuracy=best[2],
        wall_time=time.perf_counter() - start,
    )


def prepare(bundle: DatasetBundle, cfg: ExperimentConfig) -> tuple[DatasetBundle, GraphContext]:
    if cfg.normalize_features:
        bundle = DatasetBundle(bundle.graph, normalize_features(bundle.features), bundle.labels,
                               bundle.num_classes, bundle.name)
    return bundle, GraphContext(bundle.graph, mode=cfg.mode, self_loops=cfg.self_loops)


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for the split, the initialisation and dropout."""
    split, init, drop = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(s) for s in (split, init, drop))


def splits_for_seed(bundle: DatasetBundle, cfg: ExperimentConfig, seed: int) -> SplitMasks:
    return make_splits(bundle, cfg.labels_per_class, seed_streams(seed)[0], cfg.val_per_class)


def run_seed(bundle: DatasetBundle, cfg: ExperimentConfig, seed: int, ctx: GraphContext | None = None) -> RunResult:
    """One complete run; ``bundle`` must already be prepared (see :func:`prepare`)."""
    ctx = ctx or GraphContext(bundle.graph, mode=cfg.mode, self_loops=cfg.self_loops)
    split_rng, init_rng, drop_rng = seed_streams(seed)
    masks = make_splits(bundle, cfg.labels_per_class, split_rng, cfg.val_per_class)
    net = CaGATNetwork(cfg.network(bundle.num_features, bundle.num_classes), init_rng)
    result = train_once(net, bundle, masks, TrainConfig.from_experiment(cfg), drop_rng, ctx, seed=seed)
    log.info("seed %d: test acc %.4f (best epoch %d, stopped %d, %.1fs)",
             seed, result.test_accuracy, result.best_epoch, result.stop_epoch, result.wall_time)
    return result


def _run_seed_job(args):
    bundle, cfg, seed = args
    return run_seed(bundle, cfg, seed)


def run_repeated(bundle: DatasetBundle, config: ExperimentConfig, jobs: int = 1) -> AggregateResult:
    """Mean and standard deviation of test accuracy over ``config.seeds``."""
    bundle, ctx = prepare(bundle, config)
    if jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_seed_job, [(bundle, config, s) for s in config.seeds]))
    else:
        runs = [run_seed(bundle, config, s, ctx) for s in config.seeds]
    return AggregateResult.from_runs(runs)


def sweep(bundle: DatasetBundle, axis: str, values, config: ExperimentConfig, jobs: int = 1) -> list[SweepRow]:
    """One :func:`run_repeated` per value; every value sees the same seeds and hence the same splits."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from alpha, lam, xi")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    name = SWEEP_AXES[axis]
    rows = []
    for v in values:
        cfg = config.replace(**{name: float(v)})
        rows.append(SweepRow(name, float(v), run_repeated(bundle, cfg, jobs)))
    return rows
