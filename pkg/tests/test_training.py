import numpy as np
import pytest

from cagat import autodiff as ad
from cagat.attention import GraphContext
from cagat.config import ExperimentConfig, gat_config
from cagat.graph import SplitMasks
from cagat.model import CaGATNetwork, NetworkConfig
from cagat.synthetic import planted_partition, two_cliques
from cagat.training import (
    AggregateResult,
    RunResult,
    TrainConfig,
    TrainingError,
    run_repeated,
    run_seed,
    splits_for_seed,
    sweep,
    train_once,
)


def small_cfg(**kw):
    base = dict(hidden=4, heads=2, K=1, T=1, max_epochs=60, patience=20, seeds=[0, 1],
                labels_per_class=5, val_per_class=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_two_cliques_fit_within_200_epochs():
    b = two_cliques()
    cfg = ExperimentConfig(hidden=4, heads=2, dropout=0.0, weight_decay=0.0, max_epochs=200, patience=199,
                           labels_per_class=3, val_per_class=3, seeds=[0])
    res = run_repeated(b, cfg)
    assert res.mean == 1.0 and res.std == 0.0
    assert res.runs[0].best_epoch <= 200


def test_patience_rule():
    b = two_cliques(size=10)
    cfg = small_cfg(max_epochs=500, patience=5, labels_per_class=2, val_per_class=2)
    r = run_seed(b, cfg, 0)
    assert r.stop_epoch - r.best_epoch == 5 or r.stop_epoch == 500
    # best epoch is a strict minimum of the validation curve up to the stop
    assert r.val_loss[r.best_epoch - 1] == min(r.val_loss)
    assert len(r.train_loss) == len(r.val_loss) == r.stop_epoch


def test_best_checkpoint_is_reloaded(rng):
    b = two_cliques(size=10)
    ctx = GraphContext(b.graph)
    masks = SplitMasks(np.array([0, 15]), np.array([1, 16]), np.arange(2, 15))
    net = CaGATNetwork(NetworkConfig(b.num_features, 2, hidden=2, heads=1, dropout=0.0), rng)
    r = train_once(net, b, masks, TrainConfig(max_epochs=40, patience=10, weight_decay=0.0), rng, ctx)
    val = ad.masked_cross_entropy(net(b.features, ctx), b.labels, masks.val).item()
    assert val == pytest.approx(r.val_loss[r.best_epoch - 1], abs=1e-12)


def test_reproducible():
    b = planted_partition(nodes_per_class=20, num_classes=2, num_features=12)
    cfg = small_cfg(max_epochs=15, patience=5)
    a, c = run_repeated(b, cfg), run_repeated(b, cfg)
    assert [r.train_loss for r in a.runs] == [r.train_loss for r in c.runs]
    assert a.mean == c.mean


def test_parallel_jobs_match_serial():
    b = planted_partition(nodes_per_class=20, num_classes=2, num_features=12)
    cfg = small_cfg(max_epochs=10, patience=5)
    serial, par = run_repeated(b, cfg), run_repeated(b, cfg, jobs=2)
    assert [r.test_accuracy for r in serial.runs] == [r.test_accuracy for r in par.runs]
    assert [r.val_loss for r in serial.runs] == [r.val_loss for r in par.runs]


def test_single_seed_std_zero():
    agg = AggregateResult.from_runs([RunResult(3, [1.0], [1.0], 1, 1, 0.5, 0.5, 0.0)])
    assert agg.std == 0.0 and agg.mean == 0.5


def test_aggregate_sorted_and_sample_std():
    runs = [RunResult(s, [1.0], [1.0], 1, 1, acc, 0.0, 0.0) for s, acc in [(2, 0.8), (0, 0.6)]]
    agg = AggregateResult.from_runs(runs)
    assert [r.seed for r in agg.runs] == [0, 2]
    assert agg.std == pytest.approx(np.std([0.6, 0.8], ddof=1))


def test_sweep_shares_splits():
    b = planted_partition(nodes_per_class=20, num_classes=2, num_features=12)
    cfg = small_cfg(max_epochs=5, patience=2, seeds=[4])
    rows = sweep(b, "lambda", [0.1, 0.5], cfg)
    assert [r.axis for r in rows] == ["lam", "lam"]
    assert [r.value for r in rows] == [0.1, 0.5]
    s1 = splits_for_seed(b, cfg.replace(lam=0.1), 4)
    s2 = splits_for_seed(b, cfg.replace(lam=0.5), 4)
    np.testing.assert_array_equal(s1.train, s2.train)
    with pytest.raises(ValueError):
        sweep(b, "heads", [1], cfg)
    with pytest.raises(ValueError):
        sweep(b, "xi", [], cfg)


def test_gat_baseline_runs():
    b = planted_partition(nodes_per_class=20, num_classes=2, num_features=12)
    res = run_repeated(b, gat_config(small_cfg(max_epochs=5, patience=2, seeds=[0])))
    assert 0.0 <= res.mean <= 1.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_aborts(rng):
    b = two_cliques(size=6)
    masks = SplitMasks(np.array([0, 6]), np.array([1, 7]), np.arange(2, 6))
    net = CaGATNetwork(NetworkConfig(b.num_features, 2, hidden=2, heads=1, dropout=0.0), rng)
    with pytest.raises(TrainingError):
        train_once(net, b, masks, TrainConfig(lr=1e300, max_epochs=20, patience=5), rng, GraphContext(b.graph))


def test_run_result_roundtrip():
    r = RunResult(1, [0.5, 0.25], [0.6, 0.3], 2, 2, 0.9, 0.8, 1.5)
    assert RunResult.from_dict(r.to_dict()) == r
