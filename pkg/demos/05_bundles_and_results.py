# Writing a dataset bundle, loading it back, and exporting results.
import tempfile
from pathlib import Path

import numpy as np

from cagat.checkpoint import load_checkpoint, save_checkpoint
from cagat.config import ExperimentConfig
from cagat.io import export_curves, export_results, load_bundle, load_results, write_bundle
from cagat.model import CaGATNetwork
from cagat.synthetic import two_cliques
from cagat.training import run_repeated

root = Path(tempfile.mkdtemp())
data = two_cliques(size=15)

write_bundle(data, root / "cliques", feature_encoding="binary-f32", checksums=True)
print("bundle files:", sorted(p.name for p in (root / "cliques").iterdir()))
print((root / "cliques" / "manifest.json").read_text())

back = load_bundle(root / "cliques")
print(f"loaded: n={back.n} edges={back.graph.num_edges} d={back.num_features} c={back.num_classes}")

cfg = ExperimentConfig(seeds=[0, 1], hidden=4, heads=2, max_epochs=100, patience=20,
                       labels_per_class=3, val_per_class=3)
res = run_repeated(back, cfg)
export_results(res, root / "results.json")
export_results(res, root / "aggregate.csv", "csv")
export_curves(res.runs, root / "curves.csv")
assert load_results(root / "results.json") == res
print((root / "aggregate.csv").read_text())

net = CaGATNetwork(cfg.network(back.num_features, back.num_classes), np.random.default_rng(0))
save_checkpoint(net.store, root / "model.ckpt")
print("checkpoint tensors:", {k: v.shape for k, v in load_checkpoint(root / "model.ckpt").items()})
