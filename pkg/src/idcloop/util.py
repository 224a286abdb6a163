"""Small shared helpers: canonical JSON, hashing, seeded RNG derivation."""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import numpy as np


def canonical_json(obj: Any) -> str:
    """Serialize to a byte-stable JSON string (sorted keys, fixed separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_digest(obj: Any) -> bytes:
    """32-byte digest of a JSON-serializable configuration object."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).digest()


def derive_rng(*parts: object) -> np.random.Generator:
    """Deterministic generator derived from a tuple of seed parts.

    Hashing keeps the derivation independent of platform int sizes and of
    worker scheduling, so per-item streams are reproducible anywhere.
    """
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def derive_seed(*parts: object) -> int:
    """Deterministic non-negative integer seed from a tuple of parts.

    Same hashing scheme as derive_rng, but returns a plain int for configs
    that store their seed as a field.
    """
    key = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little")


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write a file so readers never observe a partial payload."""
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
