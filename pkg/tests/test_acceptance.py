"""Acceptance criteria, one test each.

Criteria 1-6 run on random small instances.  Criteria 7-11 need the Cora and
Citeseer bundles (see README) under ``$CAGAT_DATA_DIR/cora`` and
``$CAGAT_DATA_DIR/citeseer``; without them they are reported as BLOCKED and
skipped.  Criteria 7-10 train for a long time and are marked ``slow``.

Run with ``pytest tests/test_acceptance.py -rs`` to see the summary block.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from cagat import selftest
from cagat.config import ExperimentConfig, gat_config
from cagat.io import load_bundle
from cagat.training import run_repeated, sweep


def check(report, number, name, value, tol, seconds=None, budget=None, cmp="<"):
    ok = value < tol if cmp == "<" else value <= tol
    detail = f"{value:.3e} (tolerance {cmp} {tol:g})"
    if budget is not None:
        ok = ok and seconds < budget
        detail += f", {seconds:.2f}s (budget {budget:g}s)"
    report(number, name, "PASS" if ok else "FAIL", detail)
    assert ok, detail


def timed(fn, *args):
    start = time.perf_counter()
    value = fn(*args)
    return value, time.perf_counter() - start


def test_01_kronecker_equivalence(report):
    value, secs = timed(selftest.kronecker_equivalence, np.random.default_rng(1), 50)
    check(report, 1, "Kronecker oracle equivalence, 50 instances", value, 1e-12, secs, 10)


def test_02_fixed_point_residual(report):
    value, secs = timed(selftest.fixed_point_residual, np.random.default_rng(2))
    check(report, 2, "fixed-point stationarity residual", value, 1e-8, secs, 10)


def test_03_np_equivalence(report):
    value, secs = timed(selftest.np_equivalence, np.random.default_rng(3))
    check(report, 3, "NP truncated (T=200) vs closed form", value, 1e-8, secs, 5)


def test_04_gradient_correctness(report):
    start = time.perf_counter()
    value = max(selftest.model_gradcheck(np.random.default_rng(4), "dense"),
                selftest.model_gradcheck(np.random.default_rng(4), "masked"))
    check(report, 4, "2-layer gradient check, max rel. error", value, 1e-4, time.perf_counter() - start, 60)


def test_05_gat_degeneracy(report):
    value = selftest.gat_degeneracy(np.random.default_rng(5))
    check(report, 5, "GAT degeneracy vs loop reference", value, 1e-12, cmp="<=")


def test_06_monotone_alternation(report):
    worst = max(selftest.max_increase(selftest.alternation_objectives(np.random.default_rng(s)))
                for s in range(5))
    check(report, 6, "monotone alternation, max objective increase", worst, 1e-10, cmp="<=")


# --------------------------------------------------------------------------
# dataset criteria


def bundle_dir(name):
    root = os.environ.get("CAGAT_DATA_DIR")
    if root and (Path(root) / name / "manifest.json").is_file():
        return Path(root) / name
    return None


def require(report, number, title, *names):
    missing = [n for n in names if bundle_dir(n) is None]
    if missing:
        reason = f"blocked: dataset bundle absent ({', '.join(missing)} under $CAGAT_DATA_DIR)"
        report(number, title, "BLOCKED", reason)
        pytest.skip(reason)
    return [load_bundle(bundle_dir(n)) for n in names]


@pytest.fixture(scope="module")
def cora_runs():
    cache = {}

    def get(key, cfg):
        if key not in cache:
            cache[key] = run_repeated(load_bundle(bundle_dir("cora")), cfg)
        return cache[key]

    return get


@pytest.mark.slow
def test_07_cora_accuracy(report, cora_runs):
    require(report, 7, "Cora mean test accuracy, 10 seeds", "cora")
    res = cora_runs("cagat", ExperimentConfig(mode="masked"))
    ok = res.mean >= 0.75
    report(7, "Cora mean test accuracy, 10 seeds", "PASS" if ok else "FAIL",
           f"{100 * res.mean:.2f} ± {100 * res.std:.2f} (need >= 75.00)")
    assert ok


@pytest.mark.slow
def test_08_cagat_vs_gat(report, cora_runs):
    require(report, 8, "CaGAT >= GAT - 0.3 points on Cora", "cora")
    ours = cora_runs("cagat", ExperimentConfig(mode="masked"))
    gat = cora_runs("gat", gat_config(ExperimentConfig(mode="masked")))
    ok = ours.mean >= gat.mean - 0.003
    report(8, "CaGAT >= GAT - 0.3 points on Cora", "PASS" if ok else "FAIL",
           f"CaGAT {100 * ours.mean:.2f} vs GAT {100 * gat.mean:.2f}")
    assert ok


@pytest.mark.slow
def test_09_training_loss(report, cora_runs):
    require(report, 9, "CaGAT final train loss <= GAT (seed 0)", "cora")
    ours = cora_runs("cagat", ExperimentConfig(mode="masked")).runs[0]
    gat = cora_runs("gat", gat_config(ExperimentConfig(mode="masked"))).runs[0]
    ok = ours.final_train_loss <= gat.final_train_loss
    report(9, "CaGAT final train loss <= GAT (seed 0)", "PASS" if ok else "FAIL",
           f"CaGAT {ours.final_train_loss:.4f} vs GAT {gat.final_train_loss:.4f}")
    assert ok


@pytest.mark.slow
def test_10_xi_direction(report):
    (cora,) = require(report, 10, "xi=1e-3 >= xi=0 on Cora, L=10", "cora")
    rows = sweep(cora, "xi", [1e-3, 0.0], ExperimentConfig(mode="masked", labels_per_class=10))
    with_xi, without = rows[0].result.mean, rows[1].result.mean
    ok = with_xi >= without
    report(10, "xi=1e-3 >= xi=0 on Cora, L=10", "PASS" if ok else "FAIL",
           f"{100 * with_xi:.2f} vs {100 * without:.2f}")
    assert ok


def test_11_loader_counts(report):
    cora, citeseer = require(report, 11, "loader counts for Cora and Citeseer", "cora", "citeseer")
    got = [(b.n, b.graph.num_edges, b.num_features, b.num_classes) for b in (cora, citeseer)]
    want = [(2485, 7554, 1433, 7), (2110, 5778, 3703, 6)]
    ok = got == want
    report(11, "loader counts for Cora and Citeseer", "PASS" if ok else "FAIL", f"{got} (want {want})")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-rs"]))
