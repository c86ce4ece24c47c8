"""Self-describing checkpoint container.

Layout: an 8-byte magic string, a little-endian uint32 header length, a JSON
header (format version, model config, step, tensor manifest with name/shape/
dtype/offset), then raw little-endian float32 tensor data at the stated
offsets.  Loading is bit-exact and validates the manifest against the file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .model.config import ModelConfig

MAGIC = b"PNOFILL1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray], config: ModelConfig,
                    step: int = 0, extra: dict | None = None) -> None:
    names = sorted(params)
    manifest = []
    offset = 0
    for name in names:
        arr = params[name]
        nbytes = arr.size * 4
        manifest.append({"name": name, "shape": list(arr.shape),
                         "dtype": "float32", "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": config.to_dict(),
        "step": int(step),
        "tensors": manifest,
    }
    if extra:
        header["extra"] = extra
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for name in names:
            f.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], ModelConfig, int]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"bad magic {data[:8]!r}; not a checkpoint file")
    (header_len,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12:12 + header_len])
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {header.get('format_version')}")
    base = 12 + header_len
    params: dict[str, np.ndarray] = {}
    for t in header["tensors"]:
        start = base + t["offset"]
        end = start + t["nbytes"]
        if end > len(data):
            raise CheckpointError(f"tensor {t['name']!r} extends past end of file")
        arr = np.frombuffer(data[start:end], dtype="<f4").reshape(t["shape"])
        if arr.size * 4 != t["nbytes"]:
            raise CheckpointError(f"tensor {t['name']!r} shape/byte mismatch")
        params[t["name"]] = arr.copy()
    config = ModelConfig.from_dict(header["model_config"])
    return params, config, int(header.get("step", 0))


def checkpoint_digest(path) -> str:
    """SHA-256 of the checkpoint file, as reported by the service."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
