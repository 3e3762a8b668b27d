"""Versioned checkpoint container.

Layout: magic ``DCKP``, u16 version, u32 header length, UTF-8 JSON header, then
the raw little-endian float32 tensors in header order. The header stores the
model config, tensor names/shapes/offsets and free-form training metadata, so
the same file can resume a run (optimizer moments are stored as tensors too).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .forecaster import Forecaster, ModelConfig

MAGIC = b"DCKP"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: Forecaster, extra_tensors: dict[str, np.ndarray] | None = None,
                    meta: dict | None = None) -> None:
    tensors = {f"model.{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    for k, v in (extra_tensors or {}).items():
        tensors[k] = np.asarray(v)
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"config": model.config.to_dict(), "tensors": entries, "meta": meta or {}},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def read_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray], dict]:
    buf = Path(path).read_bytes()
    if len(buf) < _PREFIX.size:
        raise CheckpointError(f"{path}: file too short for a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    try:
        header = json.loads(buf[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    tensors = {}
    for e in header["tensors"]:
        lo = start + e["offset"]
        if lo + e["nbytes"] > len(buf):
            raise CheckpointError(f"{path}: tensor {e['name']} truncated")
        tensors[e["name"]] = np.frombuffer(buf, dtype="<f4", count=e["nbytes"] // 4, offset=lo).reshape(e["shape"])
    return ModelConfig.from_dict(header["config"]), tensors, header.get("meta", {})


def load_checkpoint(path) -> tuple[Forecaster, dict[str, np.ndarray], dict]:
    """Rebuild the model; returns ``(model, non-model tensors, meta)``."""
    config, tensors, meta = read_checkpoint(path)
    model = Forecaster(config)
    state = {k[len("model."):]: torch.from_numpy(v.copy()) for k, v in tensors.items() if k.startswith("model.")}
    model.load_state_dict(state)
    extra = {k: v for k, v in tensors.items() if not k.startswith("model.")}
    return model, extra, meta
