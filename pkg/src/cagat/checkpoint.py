"""Parameter checkpoints: a JSON index followed by raw little-endian float64 data.

Layout::

    8 bytes    little-endian uint64, length L of the JSON header
    L bytes    UTF-8 JSON {"endianness": "little", "dtype": "float64",
                           "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    ...        tensor data; offsets are relative to the end of the header
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import ParamStore


def save_checkpoint(store: ParamStore | dict, path) -> Path:
    from .io import atomic_write

    params = store.snapshot() if isinstance(store, ParamStore) else store
    index, blobs, offset = [], [], 0
    for name, arr in params.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    header = json.dumps({"endianness": "little", "dtype": "float64", "tensors": index}).encode()
    with atomic_write(path, "wb") as f:
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)
    return Path(path)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8:8 + hlen])
    if header.get("endianness") != "little" or header.get("dtype") != "float64":
        raise ValueError("unsupported checkpoint encoding")
    base = 8 + hlen
    out = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        buf = raw[start:start + t["nbytes"]]
        out[t["name"]] = np.frombuffer(buf, dtype="<f8").reshape(t["shape"]).astype(np.float64)
    return out
