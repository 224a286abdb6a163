"""Checkpoint serialization.

Binary layout: magic ``IDCM``; then a CRC-covered body of format version
(u32 LE), model-config digest (32 bytes), tensor count (u64 LE), and the
tensors sorted by name (u64 name length, UTF-8 name, u64 rank, u64 dims,
raw little-endian float32 payload); then CRC-32 of the body (u32 LE).

Metadata (model config, training config, best-epoch metrics, creation
time) rides along as a reserved ``__meta__`` tensor holding the UTF-8
bytes of a canonical JSON document, one byte per float32 element, so the
container format stays a pure named-tensor store.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from idcloop.classifier.model import Model, ModelConfig, build_model
from idcloop.errors import (
    CheckpointConfigHashError,
    CheckpointCRCError,
    CheckpointError,
    CheckpointMagicError,
    CheckpointTensorCountError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from idcloop.util import atomic_write_bytes, canonical_json

MAGIC = b"IDCM"
CHECKPOINT_VERSION = 1
META_TENSOR = "__meta__"


@dataclass
class Checkpoint:
    model_config: ModelConfig
    tensors: dict[str, np.ndarray]
    training_config: Optional[dict] = None
    metrics: dict = field(default_factory=dict)
    created_at: Optional[str] = None
    version: int = CHECKPOINT_VERSION

    def meta_dict(self) -> dict:
        return {
            "model_config": self.model_config.to_dict(),
            "training_config": self.training_config,
            "metrics": self.metrics,
            "created_at": self.created_at,
        }


def _meta_tensor(ckpt: Checkpoint) -> np.ndarray:
    raw = canonical_json(ckpt.meta_dict()).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float32)


def _decode_meta(arr: np.ndarray) -> dict:
    try:
        text = arr.astype(np.uint8).tobytes().decode("utf-8")
        return json.loads(text)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint metadata: {exc}") from exc


def save_checkpoint(ckpt: Checkpoint, path: Path) -> None:
    """Serialize atomically; tensors are written in sorted-name order."""
    if META_TENSOR in ckpt.tensors:
        raise CheckpointError(f"{META_TENSOR} is a reserved tensor name")
    tensors = dict(ckpt.tensors)
    tensors[META_TENSOR] = _meta_tensor(ckpt)

    parts = [
        struct.pack("<I", ckpt.version),
        ckpt.model_config.digest(),
        struct.pack("<Q", len(tensors)),
    ]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<Q", arr.ndim))
        parts.extend(struct.pack("<Q", d) for d in arr.shape)
        parts.append(arr.tobytes())
    body = b"".join(parts)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    atomic_write_bytes(path, MAGIC + body + struct.pack("<I", crc))


class _Reader:
    def __init__(self, data: bytes, limit: int):
        self.data = data
        self.pos = 4  # past the magic
        self.limit = limit

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.limit:
            raise CheckpointTruncatedError(f"file ends inside {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def load_checkpoint(
    path: Path, expected_config: Optional[ModelConfig] = None
) -> Checkpoint:
    """Parse and verify a checkpoint file.

    Structural problems surface first (magic, version, truncation, tensor
    count), then the CRC over the whole body, then the config-hash checks.
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise CheckpointMagicError(f"{path} is not a checkpoint (bad magic)")
    if len(data) < 4 + 4 + 32 + 8 + 4:
        raise CheckpointTruncatedError(f"{path} is shorter than a checkpoint header")

    limit = len(data) - 4  # trailing CRC
    r = _Reader(data, limit)
    version = r.u32("format version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    stored_hash = r.take(32, "config hash")
    count = r.u64("tensor count")

    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        name_len = r.u64(f"tensor {i} name length")
        raw_name = r.take(name_len, f"tensor {i} name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"tensor {i} name is not valid utf-8") from exc
        rank = r.u64(f"tensor {name} rank")
        dims = tuple(r.u64(f"tensor {name} dim") for _ in range(rank))
        n_elems = 1
        for d in dims:
            n_elems *= d
        payload = r.take(4 * n_elems, f"tensor {name} payload")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float32)
    if r.pos != limit:
        raise CheckpointTensorCountError(
            f"{limit - r.pos} bytes remain after the {count} declared tensors"
        )

    stored_crc = struct.unpack("<I", data[limit:])[0]
    actual_crc = zlib.crc32(data[4:limit]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CheckpointCRCError(
            f"CRC mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )

    if META_TENSOR not in tensors:
        raise CheckpointError("checkpoint is missing its metadata tensor")
    meta = _decode_meta(tensors.pop(META_TENSOR))
    model_config = ModelConfig.from_dict(meta["model_config"])
    if model_config.digest() != stored_hash:
        raise CheckpointConfigHashError(
            "header config hash does not match the embedded model config"
        )
    if expected_config is not None and expected_config.digest() != stored_hash:
        raise CheckpointConfigHashError(
            "checkpoint was produced by a different model configuration"
        )

    return Checkpoint(
        model_config=model_config,
        tensors=tensors,
        training_config=meta.get("training_config"),
        metrics=meta.get("metrics", {}),
        created_at=meta.get("created_at"),
        version=version,
    )


def model_from_checkpoint(ckpt: Checkpoint, seed: int = 0) -> Model:
    """Rebuild a model and overwrite its tensors from the checkpoint."""
    model = build_model(ckpt.model_config, seed=seed)
    model.load_tensors(ckpt.tensors)
    return model
