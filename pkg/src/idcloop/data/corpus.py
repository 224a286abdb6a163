"""Corpus assembly and stratified splitting.

Planning (which augmented variants exist, how they split) is separated
from materialization (decoding and resampling pixels) so counts and
manifests can be produced without touching image bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from idcloop.data.augment import AugmentConfig, apply_affine, item_rng, sample_affine_params
from idcloop.data.ingest import Patch, PatchRecord, decode_and_normalize
from idcloop.errors import ConfigError, DatasetError
from idcloop.util import canonical_json, config_digest, derive_rng

# guards against the float representation of ratios like 0.7 rounding
# n*ratio a hair below the intended integer before flooring
RATIO_EPS = 1e-9

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"

RESAMPLING_OPTIONS = {"interpolation": "bilinear", "fill": "edge"}


@dataclass(frozen=True)
class PlanItem:
    """One planned corpus member: an original or one augmented copy."""

    patch_id: str
    record: PatchRecord
    copy_index: Optional[int]  # None for an original kept as-is

    @property
    def label(self) -> int:
        return self.record.label

    @property
    def augmented(self) -> bool:
        return self.copy_index is not None

    @property
    def root_id(self) -> str:
        """Identifier of the source original, for leak-free grouping."""
        return self.record.record_id


def plan_corpus(
    records: Sequence[PatchRecord],
    cfg: AugmentConfig,
    keep_originals: bool = False,
) -> list[PlanItem]:
    """Lay out the corpus without decoding any pixels.

    Default mode emits copies_per_original transformed variants per
    original and drops the originals themselves; keep_originals emits the
    original plus copies_per_original - 1 variants.
    """
    items: list[PlanItem] = []
    for record in sorted(records, key=lambda r: r.record_id):
        rid = record.record_id
        start = 0
        if keep_originals:
            items.append(PlanItem(patch_id=rid, record=record, copy_index=None))
            start = 1
        for ci in range(start, cfg.copies_per_original):
            items.append(
                PlanItem(patch_id=f"{rid}.aug{ci}", record=record, copy_index=ci)
            )
    return items


def materialize_items(
    items: Iterable[PlanItem], cfg: AugmentConfig, pad: bool = False
) -> list[Patch]:
    """Decode and transform planned items, decoding each parent once."""
    cache: dict[str, Patch] = {}
    out: list[Patch] = []
    for item in items:
        rid = item.record.record_id
        parent = cache.get(rid)
        if parent is None:
            parent = decode_and_normalize(item.record, pad=pad)
            cache[rid] = parent
        if item.copy_index is None:
            out.append(parent)
            continue
        params = sample_affine_params(cfg, item_rng(cfg.seed, rid, item.copy_index))
        transformed = apply_affine(parent, params)
        out.append(
            Patch(
                pixels=transformed.pixels,
                record=item.record,
                augmented_from=rid,
                copy_index=item.copy_index,
            )
        )
    return out


def build_corpus(
    records: Sequence[PatchRecord],
    cfg: AugmentConfig,
    keep_originals: bool = False,
    pad: bool = False,
) -> list[Patch]:
    """Plan and materialize in one step (small datasets)."""
    return materialize_items(plan_corpus(records, cfg, keep_originals), cfg, pad=pad)


@dataclass(frozen=True)
class ManifestEntry:
    patch_id: str
    label: int
    split: str
    augmented: bool

    def to_dict(self) -> dict:
        return {
            "id": self.patch_id,
            "label": self.label,
            "split": self.split,
            "augmented": self.augmented,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            patch_id=d["id"],
            label=d["label"],
            split=d["split"],
            augmented=d["augmented"],
        )


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    counts: dict[str, dict[str, int]]
    seed: int
    config_hash: str
    options: dict

    def validate(self) -> None:
        seen: set[str] = set()
        tally: dict[str, dict[str, int]] = {
            SPLIT_TRAIN: {"0": 0, "1": 0},
            SPLIT_TEST: {"0": 0, "1": 0},
        }
        for e in self.entries:
            if e.patch_id in seen:
                raise DatasetError(f"duplicate patch id in manifest: {e.patch_id}")
            seen.add(e.patch_id)
            if e.split not in tally:
                raise DatasetError(f"unknown split {e.split!r} for {e.patch_id}")
            tally[e.split][str(e.label)] += 1
        if tally != self.counts:
            raise DatasetError(f"manifest counts {self.counts} do not match entries {tally}")

    def to_json(self) -> str:
        return canonical_json(
            {
                "entries": [e.to_dict() for e in self.entries],
                "counts": self.counts,
                "seed": self.seed,
                "config_hash": self.config_hash,
                "options": self.options,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        d = json.loads(text)
        manifest = cls(
            entries=[ManifestEntry.from_dict(e) for e in d["entries"]],
            counts=d["counts"],
            seed=d["seed"],
            config_hash=d["config_hash"],
            options=d["options"],
        )
        manifest.validate()
        return manifest

    def ids_for_split(self, split: str) -> set[str]:
        return {e.patch_id for e in self.entries if e.split == split}


def _train_count(n: int, ratio: float) -> int:
    return int(math.floor(n * ratio + RATIO_EPS))


def split_corpus(
    items: Sequence[PlanItem],
    train_ratio: float = 0.7,
    seed: int = 0,
    order: str = "leak_free",
    cfg: Optional[AugmentConfig] = None,
    keep_originals: bool = False,
) -> CorpusManifest:
    """Stratified train/test assignment over planned corpus items.

    Per class, floor(n * ratio) items go to train and the rest to test.
    `faithful` shuffles and splits the augmented corpus directly, so
    variants of one original can straddle the boundary; `leak_free`
    assigns whole originals (with all their variants) to one side.
    """
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError(f"train_ratio must be in (0, 1), got {train_ratio}")
    if order not in ("leak_free", "faithful"):
        raise ConfigError(f"order must be leak_free or faithful, got {order!r}")

    by_class: dict[int, list[PlanItem]] = {0: [], 1: []}
    for item in items:
        by_class[item.label].append(item)
    for label in (0, 1):
        if not by_class[label]:
            raise DatasetError(f"class {label} has no corpus items to split")

    split_of: dict[str, str] = {}
    for label in (0, 1):
        group = sorted(by_class[label], key=lambda i: i.patch_id)
        rng = derive_rng("split", order, str(seed), str(label))
        if order == "faithful":
            perm = rng.permutation(len(group))
            n_train = _train_count(len(group), train_ratio)
            for pos, idx in enumerate(perm):
                split_of[group[idx].patch_id] = (
                    SPLIT_TRAIN if pos < n_train else SPLIT_TEST
                )
        else:
            roots = sorted({i.root_id for i in group})
            perm = rng.permutation(len(roots))
            n_train_roots = _train_count(len(roots), train_ratio)
            train_roots = {roots[idx] for idx in perm[:n_train_roots]}
            for item in group:
                split_of[item.patch_id] = (
                    SPLIT_TRAIN if item.root_id in train_roots else SPLIT_TEST
                )

    entries = [
        ManifestEntry(
            patch_id=item.patch_id,
            label=item.label,
            split=split_of[item.patch_id],
            augmented=item.augmented,
        )
        for item in sorted(items, key=lambda i: i.patch_id)
    ]
    counts = {
        SPLIT_TRAIN: {"0": 0, "1": 0},
        SPLIT_TEST: {"0": 0, "1": 0},
    }
    for e in entries:
        counts[e.split][str(e.label)] += 1

    hashed = {
        "augment": (cfg.to_dict() if cfg is not None else None),
        "train_ratio": train_ratio,
        "order": order,
        "keep_originals": keep_originals,
        **RESAMPLING_OPTIONS,
    }
    manifest = CorpusManifest(
        entries=entries,
        counts=counts,
        seed=seed,
        config_hash=config_digest(hashed).hex(),
        options={
            "train_ratio": train_ratio,
            "order": order,
            "keep_originals": keep_originals,
            **RESAMPLING_OPTIONS,
        },
    )
    manifest.validate()
    return manifest


def assign_items(
    items: Sequence[PlanItem], manifest: CorpusManifest
) -> dict[str, list[PlanItem]]:
    """Group planned items by the split the manifest assigns them."""
    split_of = {e.patch_id: e.split for e in manifest.entries}
    out: dict[str, list[PlanItem]] = {SPLIT_TRAIN: [], SPLIT_TEST: []}
    for item in items:
        split = split_of.get(item.patch_id)
        if split is None:
            raise DatasetError(f"item {item.patch_id} missing from manifest")
        out[split].append(item)
    return out
