"""Dataset ingestion, balancing, augmentation, and corpus splitting."""

from idcloop.data.augment import (
    AffineParams,
    AugmentConfig,
    apply_affine,
    item_rng,
    sample_affine_params,
)
from idcloop.data.corpus import (
    CorpusManifest,
    ManifestEntry,
    PlanItem,
    assign_items,
    build_corpus,
    materialize_items,
    plan_corpus,
    split_corpus,
)
from idcloop.data.ingest import (
    Patch,
    PatchRecord,
    balance_sample,
    decode_and_normalize,
    flatten_patch,
    parse_patch_filename,
    scan_dataset,
)
from idcloop.data.synthetic import generate_empty_population, generate_stripe_dataset

__all__ = [
    "AffineParams",
    "AugmentConfig",
    "CorpusManifest",
    "ManifestEntry",
    "Patch",
    "PatchRecord",
    "PlanItem",
    "apply_affine",
    "assign_items",
    "balance_sample",
    "build_corpus",
    "decode_and_normalize",
    "flatten_patch",
    "generate_empty_population",
    "generate_stripe_dataset",
    "item_rng",
    "materialize_items",
    "parse_patch_filename",
    "plan_corpus",
    "sample_affine_params",
    "scan_dataset",
    "split_corpus",
]
