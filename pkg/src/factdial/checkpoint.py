"""Binary parameter container: JSON manifest + raw float64 payload.

Layout: 4-byte magic, little-endian u64 manifest length, UTF-8 JSON
manifest, then the concatenated parameter data as little-endian float64
in row-major order. Round-trips are bit-exact. Used for model
checkpoints and trained embedding tables alike.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"FDL1"
FORMAT_VERSION = 1


def save_checkpoint(path, params: dict, meta: dict | None = None) -> None:
    """Write params (name -> Tensor or ndarray) plus a free-form meta dict."""
    entries = []
    chunks = []
    offset = 0
    for name, p in params.items():
        arr = np.ascontiguousarray(p.data if isinstance(p, Tensor) else p, dtype=np.float64)
        raw = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "params": entries,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; returns (name -> float64 ndarray, meta)."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"checkpoint: bad magic in {path}")
    (mlen,) = struct.unpack("<Q", data[4:12])
    manifest = json.loads(data[12 : 12 + mlen].decode("utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"checkpoint: unsupported format version {manifest.get('format_version')}"
        )
    payload = data[12 + mlen :]
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(payload):
            raise ValueError(f"checkpoint: truncated payload for '{entry['name']}'")
        arr = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape).copy()
        params[entry["name"]] = arr
    return params, manifest["meta"]


def load_tensors(path) -> tuple[dict[str, Tensor], dict]:
    arrays, meta = load_checkpoint(path)
    return {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}, meta
