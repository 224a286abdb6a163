"""Scanning, balancing, and decoding of the patch dataset.

Patches arrive as 50x50 RGB PNG files whose names encode the source
patient, the patch coordinates in the slide, and the class label:

    <patient>_idx<k>_x<X>_y<Y>_class<C>.png
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from idcloop.errors import DatasetError, DecodeError, SizeError
from idcloop.util import derive_rng

log = logging.getLogger("idcloop.data")

PATCH_SIZE = 50

FILENAME_RE = re.compile(
    r"^(?P<patient>[A-Za-z0-9]+)_idx(?P<idx>\d+)"
    r"_x(?P<x>\d+)_y(?P<y>\d+)_class(?P<label>[01])\.png$"
)


@dataclass(frozen=True)
class PatchRecord:
    """One catalogued patch file; no pixel data is held here."""

    source_path: Path
    patient_id: str
    x: int
    y: int
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise DatasetError(f"label must be 0 or 1, got {self.label}")
        if self.x < 0 or self.y < 0:
            raise DatasetError(f"negative patch coordinates ({self.x}, {self.y})")

    @property
    def record_id(self) -> str:
        """Stable identifier: the filename stem."""
        return self.source_path.stem


@dataclass
class Patch:
    """Decoded pixel data in channel-major float32 layout."""

    pixels: np.ndarray
    record: PatchRecord
    augmented_from: Optional[str] = None
    copy_index: Optional[int] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        shape = tuple(self.pixels.shape)
        if shape != (3, PATCH_SIZE, PATCH_SIZE):
            raise SizeError(f"patch pixels must be 3x{PATCH_SIZE}x{PATCH_SIZE}, got {shape}")
        if self.pixels.dtype != np.float32:
            raise SizeError(f"patch pixels must be float32, got {self.pixels.dtype}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise DatasetError(f"pixel values outside [0, 1]: min {lo}, max {hi}")

    @property
    def patch_id(self) -> str:
        if self.augmented_from is None:
            return self.record.record_id
        return f"{self.augmented_from}.aug{self.copy_index}"

    @property
    def label(self) -> int:
        return self.record.label


def parse_patch_filename(path: Path) -> Optional[PatchRecord]:
    """Parse the naming convention; None when the name does not conform."""
    m = FILENAME_RE.match(path.name)
    if m is None:
        return None
    return PatchRecord(
        source_path=path,
        patient_id=m.group("patient"),
        x=int(m.group("x")),
        y=int(m.group("y")),
        label=int(m.group("label")),
    )


def scan_dataset(root: Path, strict: bool = False) -> list[PatchRecord]:
    """Recursively catalogue every conforming PNG under root.

    Ordering is lexicographic on the path relative to root, so the result
    is independent of filesystem enumeration order.  Non-conforming names
    are skipped with a warning, or rejected outright in strict mode.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root is not a directory: {root}")
    paths = sorted(
        (p for p in root.rglob("*.png") if p.is_file()),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    records = []
    for path in paths:
        record = parse_patch_filename(path)
        if record is None:
            if strict:
                raise DatasetError(f"unparseable patch filename: {path.name}")
            log.warning("skipping unparseable patch filename: %s", path.name)
            continue
        records.append(record)
    if not records:
        raise DatasetError(f"no patches found under {root}")
    return records


def balance_sample(
    records: Sequence[PatchRecord], n_per_class: int = 7000, seed: int = 0
) -> list[PatchRecord]:
    """Uniform sample without replacement of exactly n_per_class per class."""
    by_class: dict[int, list[PatchRecord]] = {0: [], 1: []}
    for r in records:
        by_class[r.label].append(r)
    out: list[PatchRecord] = []
    for label in (0, 1):
        group = sorted(by_class[label], key=lambda r: r.record_id)
        if len(group) < n_per_class:
            raise DatasetError(
                f"class {label} has {len(group)} records, need {n_per_class} "
                f"(short {n_per_class - len(group)})"
            )
        rng = derive_rng("balance", str(seed), str(label))
        picks = rng.choice(len(group), size=n_per_class, replace=False)
        out.extend(group[i] for i in sorted(picks))
    return out


def decode_and_normalize(source: Path | PatchRecord, pad: bool = False) -> Patch:
    """Decode a patch PNG to float32 channel-major pixels in [0, 1].

    Undersized patches (border tiles) are rejected unless pad is set, in
    which case they are edge-replicated on the right/bottom to 50x50.
    """
    if isinstance(source, PatchRecord):
        record = source
    else:
        record = parse_patch_filename(Path(source))
        if record is None:
            raise DatasetError(f"unparseable patch filename: {Path(source).name}")
    try:
        with Image.open(record.source_path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode {record.source_path}: {exc}") from exc

    h, w = arr.shape[:2]
    if h > PATCH_SIZE or w > PATCH_SIZE:
        raise SizeError(f"patch {record.source_path.name} is {w}x{h}, larger than {PATCH_SIZE}")
    if (h, w) != (PATCH_SIZE, PATCH_SIZE):
        if not pad:
            raise SizeError(
                f"patch {record.source_path.name} is {w}x{h}, expected "
                f"{PATCH_SIZE}x{PATCH_SIZE} (enable pad to edge-pad)"
            )
        arr = np.pad(arr, ((0, PATCH_SIZE - h), (0, PATCH_SIZE - w), (0, 0)), mode="edge")

    pixels = (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)
    return Patch(pixels=np.ascontiguousarray(pixels), record=record)


def flatten_patch(patch: Patch) -> np.ndarray:
    """Flatten to a 7500-vector (channel-major order) for dense-only baselines."""
    return patch.pixels.reshape(-1).copy()
