"""Dataset bundles on disk and result export.

A bundle is a directory holding ``manifest.json`` plus three data files::

    manifest.json   {"name", "n", "d", "c", "num_edges", "feature_encoding",
                     "files": {"edges", "labels", "features"}, "checksums"?}
    edges.tsv       "i<TAB>j" per line, 0-based, each undirected pair once
    labels.tsv      "node<TAB>class" per line, every node exactly once
    features.csv    n lines of d comma-separated numbers   (encoding "csv")
    features.f32    n*d little-endian float32, row-major   (encoding "binary-f32")

``checksums`` optionally maps file names to SHA-256 hex digests.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import DatasetBundle, build_graph
from .training import AggregateResult, RunResult, SweepRow

FEATURE_ENCODINGS = ("csv", "binary-f32")


class BundleError(ValueError):
    pass


@dataclass
class BundleManifest:
    name: str
    n: int
    d: int
    c: int
    num_edges: int
    feature_encoding: str = "csv"
    files: dict = field(default_factory=lambda: {
        "edges": "edges.tsv", "labels": "labels.tsv", "features": "features.csv"})
    checksums: dict = field(default_factory=dict)

    @classmethod
    def read(cls, directory: Path) -> "BundleManifest":
        path = Path(directory) / "manifest.json"
        if not path.is_file():
            raise BundleError(f"{path}: manifest not found")
        try:
            raw = json.loads(path.read_text())
            m = cls(**raw)
        except (json.JSONDecodeError, TypeError) as exc:
            raise BundleError(f"{path}: malformed manifest ({exc})") from None
        m.validate(Path(directory))
        return m

    def validate(self, directory: Path) -> None:
        for key in ("n", "d", "c"):
            if not isinstance(getattr(self, key), int) or getattr(self, key) <= 0:
                raise BundleError(f"manifest: {key} must be a positive integer")
        if self.num_edges < 0:
            raise BundleError("manifest: num_edges must be non-negative")
        if self.feature_encoding not in FEATURE_ENCODINGS:
            raise BundleError(f"manifest: feature_encoding must be one of {FEATURE_ENCODINGS}")
        for role in ("edges", "labels", "features"):
            if role not in self.files:
                raise BundleError(f"manifest: missing file entry {role!r}")
            if not (directory / self.files[role]).is_file():
                raise BundleError(f"{directory / self.files[role]}: file not found")

    def to_json(self) -> str:
        body = {k: v for k, v in self.__dict__.items() if k != "checksums" or v}
        return json.dumps(body, indent=2) + "\n"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_int_pairs(path: Path, n: int, what: str) -> np.ndarray:
    pairs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise BundleError(f"{path}:{lineno}: expected two tab-separated integers")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise BundleError(f"{path}:{lineno}: malformed integer") from None
            if what == "edge" and not (0 <= a < n and 0 <= b < n):
                raise BundleError(f"{path}:{lineno}: node id out of range [0, {n})")
            if what == "edge" and a == b:
                raise BundleError(f"{path}:{lineno}: self-edge {a}")
            if what == "label" and not 0 <= a < n:
                raise BundleError(f"{path}:{lineno}: node id out of range [0, {n})")
            pairs.append((a, b))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _read_features(path: Path, m: BundleManifest) -> np.ndarray:
    if m.feature_encoding == "binary-f32":
        raw = np.fromfile(path, dtype="<f4")
        if raw.size != m.n * m.d:
            raise BundleError(f"{path}: expected {m.n * m.d} float32 values, found {raw.size}")
        return raw.astype(np.float64).reshape(m.n, m.d)
    rows = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), 1):
            if not row:
                continue
            if len(row) != m.d:
                raise BundleError(f"{path}:{lineno}: expected {m.d} values, found {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise BundleError(f"{path}:{lineno}: malformed number") from None
    if len(rows) != m.n:
        raise BundleError(f"{path}: expected {m.n} feature rows, found {len(rows)}")
    return np.array(rows, dtype=np.float64)


def load_bundle(directory) -> DatasetBundle:
    """Read and validate a bundle; any disagreement with the manifest raises :class:`BundleError`."""
    directory = Path(directory)
    if not directory.is_dir():
        raise BundleError(f"{directory}: bundle directory not found")
    m = BundleManifest.read(directory)
    for fname, digest in m.checksums.items():
        if _sha256(directory / fname) != digest:
            raise BundleError(f"{directory / fname}: checksum mismatch")

    edges = _read_int_pairs(directory / m.files["edges"], m.n, "edge")
    graph = build_graph(m.n, edges)
    if graph.num_edges != m.num_edges:
        raise BundleError(f"edge count {graph.num_edges} disagrees with manifest ({m.num_edges})")

    lab = _read_int_pairs(directory / m.files["labels"], m.n, "label")
    if lab.shape[0] != m.n or np.unique(lab[:, 0]).size != m.n:
        raise BundleError(f"labels file must list each of the {m.n} nodes exactly once")
    labels = np.empty(m.n, dtype=np.int64)
    labels[lab[:, 0]] = lab[:, 1]
    if labels.min() < 0 or labels.max() >= m.c:
        raise BundleError(f"class id out of range [0, {m.c})")
    if np.unique(labels).size != m.c:
        raise BundleError(f"observed {np.unique(labels).size} classes, manifest says {m.c}")

    features = _read_features(directory / m.files["features"], m)
    try:
        return DatasetBundle(graph, features, labels, m.c, name=m.name)
    except ValueError as exc:
        raise BundleError(f"{directory}: {exc}") from None


def write_bundle(bundle: DatasetBundle, directory, feature_encoding: str = "csv",
                 checksums: bool = False) -> BundleManifest:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    feat_name = "features.csv" if feature_encoding == "csv" else "features.f32"
    with open(directory / "edges.tsv", "w") as f:
        f.writelines(f"{i}\t{j}\n" for i, j in bundle.graph.edges)
    with open(directory / "labels.tsv", "w") as f:
        f.writelines(f"{i}\t{c}\n" for i, c in enumerate(bundle.labels))
    if feature_encoding == "csv":
        with open(directory / feat_name, "w", newline="") as f:
            csv.writer(f).writerows([repr(float(v)) for v in row] for row in bundle.features)
    elif feature_encoding == "binary-f32":
        bundle.features.astype("<f4").tofile(directory / feat_name)
    else:
        raise ValueError(f"unknown feature encoding {feature_encoding!r}")
    m = BundleManifest(
        name=bundle.name, n=bundle.n, d=bundle.num_features, c=bundle.num_classes,
        num_edges=bundle.graph.num_edges, feature_encoding=feature_encoding,
        files={"edges": "edges.tsv", "labels": "labels.tsv", "features": feat_name},
    )
    if checksums:
        m.checksums = {fn: _sha256(directory / fn) for fn in m.files.values()}
    (directory / "manifest.json").write_text(m.to_json())
    return m


# ---------------------------------------------------------------------------
# results

AGGREGATE_COLUMNS = ["kind", "axis", "value", "seed", "test_accuracy", "mean", "std",
                     "best_epoch", "stop_epoch", "val_accuracy", "wall_time"]
CURVE_COLUMNS = ["seed", "epoch", "train_loss", "val_loss"]


@contextmanager
def atomic_write(path, mode: str = "w", **kwargs):
    """Write to a temporary file beside ``path`` and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **kwargs) as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _as_rows(results) -> list[SweepRow]:
    if isinstance(results, AggregateResult):
        return [SweepRow("", float("nan"), results)]
    if isinstance(results, RunResult):
        return [SweepRow("", float("nan"), AggregateResult.from_runs([results]))]
    return list(results)


def _to_jsonable(results):
    if isinstance(results, (AggregateResult, RunResult, SweepRow)):
        return results.to_dict()
    return [r.to_dict() for r in results]


def export_results(results, path, format: str = "json") -> Path:
    """Write results as JSON (exact float round-trip) or as the aggregate CSV table."""
    path = Path(path)
    if format == "json":
        with atomic_write(path) as f:
            json.dump(_to_jsonable(results), f, indent=1)
    elif format == "csv":
        with atomic_write(path, newline="") as f:
            w = csv.writer(f)
            w.writerow(AGGREGATE_COLUMNS)
            for row in _as_rows(results):
                agg = row.result
                value = repr(row.value) if row.axis else ""
                w.writerow(["summary", row.axis, value, "", "", repr(agg.mean), repr(agg.std),
                            "", "", "", ""])
                for r in agg.runs:
                    w.writerow(["run", row.axis, value, r.seed, repr(r.test_accuracy), "", "",
                                r.best_epoch, r.stop_epoch, repr(r.val_accuracy), repr(r.wall_time)])
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


def export_curves(runs, path) -> Path:
    with atomic_write(path, newline="") as f:
        w = csv.writer(f)
        w.writerow(CURVE_COLUMNS)
        for r in runs:
            for epoch, (tl, vl) in enumerate(zip(r.train_loss, r.val_loss), 1):
                w.writerow([r.seed, epoch, repr(tl), repr(vl)])
    return Path(path)


def load_results(path):
    """Inverse of the JSON branch of :func:`export_results`."""
    data = json.loads(Path(path).read_text())

    def one(d):
        if "axis" in d:
            return SweepRow.from_dict(d)
        if "runs" in d:
            return AggregateResult.from_dict(d)
        return RunResult.from_dict(d)

    return [one(d) for d in data] if isinstance(data, list) else one(data)
