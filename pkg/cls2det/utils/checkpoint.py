"""
checkpoint.py - KDCK parameter files plus a JSON sidecar with kind, architecture, config and dataset hash

KDCK: "KDCK" | version u32 | entry count u32, then per entry
      name length u32 | UTF-8 name | rank u32 | dims u32 x rank | f32 data (row-major)
All little-endian. Entries keep their insertion order, so load -> save reproduces the file byte for byte.
"""

import io
import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np

from cls2det.errors import CheckpointError
from .logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

CHECKPOINT_MAGIC = b"KDCK"
CHECKPOINT_VERSION = 1
_U32 = struct.Struct("<I")
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: "OrderedDict[str, np.ndarray]"
    kind: str = ""
    architecture: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    dataset_hash: str = ""

    @property
    def meta(self) -> dict:
        return {"kind": self.kind, "architecture": self.architecture, "config": self.config,
                "dataset_hash": self.dataset_hash}


def meta_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def encode_params(params: Mapping[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(_U32.pack(CHECKPOINT_VERSION))
    out.write(_U32.pack(len(params)))
    for name, value in params.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(value, dtype=_F32)
        out.write(_U32.pack(len(raw)))
        out.write(raw)
        out.write(_U32.pack(arr.ndim))
        for d in arr.shape:
            out.write(_U32.pack(d))
        out.write(arr.tobytes())
    return out.getvalue()


def decode_params(buf: bytes, where: str = "checkpoint") -> "OrderedDict[str, np.ndarray]":
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{where}: truncated at offset {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{where}: bad magic, not a KDCK checkpoint")
    (version,) = _U32.unpack(take(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{where}: unsupported checkpoint version {version}")
    (count,) = _U32.unpack(take(4))
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (n,) = _U32.unpack(take(4))
        name = take(n).decode("utf-8")
        (rank,) = _U32.unpack(take(4))
        shape = tuple(_U32.unpack(take(4))[0] for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(take(size * _F32.itemsize), dtype=_F32).reshape(shape).copy()
    if pos != len(buf):
        raise CheckpointError(f"{where}: {len(buf) - pos} trailing bytes")
    return params


def save_checkpoint(path: Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(ckpt.params))
    with open(meta_path(path), "w") as f:
        json.dump(ckpt.meta, f, indent=2, sort_keys=True)
    logger.info(f"Saved {ckpt.kind or 'model'} checkpoint ({len(ckpt.params)} tensors) to {path}")
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    path = Path(path)
    params = decode_params(path.read_bytes(), str(path))
    meta = {}
    mp = meta_path(path)
    if mp.exists():
        with open(mp, "r") as f:
            meta = json.load(f)
    else:
        logger.warning(f"Checkpoint {path} has no metadata sidecar")
    return Checkpoint(params, meta.get("kind", ""), meta.get("architecture", {}), meta.get("config", {}),
                      meta.get("dataset_hash", ""))


def model_params(model) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((name, p.data) for name, p in model.params.items())


def load_into(model, params: Mapping[str, np.ndarray]):
    """Copy checkpoint tensors into a model's parameters (names and shapes must agree)."""
    missing = [n for n in model.params if n not in params]
    extra = [n for n in params if n not in model.params]
    if missing or extra:
        raise CheckpointError(f"checkpoint does not fit model (missing {missing}, unexpected {extra})")
    for name, p in model.params.items():
        value = np.asarray(params[name], dtype=np.float64)
        if value.shape != p.shape:
            raise CheckpointError(f"{name}: checkpoint shape {value.shape}, model shape {p.shape}")
        p.data = value
    return model


def check_dataset_hash(ckpt: Checkpoint, current: Optional[str]) -> bool:
    if ckpt.dataset_hash and current and ckpt.dataset_hash != current:
        logger.warning(f"Checkpoint was trained on dataset {ckpt.dataset_hash[:12]}, evaluating on {current[:12]}")
        return False
    return True
