"""Synthetic fixture datasets.

Stripe patches give a small, learnable two-class problem: class 0 varies
along rows (horizontal bands), class 1 along columns (vertical bands).
Augmentation rotations up to 30 degrees leave the orientations on
opposite sides of the 45-degree ambiguity line, so labels survive the
pipeline.  Per-sample contrast and noise control how hard the task is.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

from idcloop.util import derive_rng

SIZE = 50


def _stripe_image(
    label: int,
    amp: float,
    phase: float,
    freq: float,
    noise: float,
    rng: np.random.Generator,
    size: int = SIZE,
    mix: float = 0.0,
) -> np.ndarray:
    coord = np.arange(size, dtype=np.float64)
    wave = amp * np.sin(2.0 * np.pi * freq * coord + phase)
    rows = np.tile(wave[:, None], (1, size))  # varies along rows
    cols = np.tile(wave[None, :], (size, 1))  # varies along columns
    primary, cross = (rows, cols) if label == 0 else (cols, rows)
    img = 0.5 + primary + mix * cross
    img = img[:, :, None] + rng.normal(0.0, noise, size=(size, size, 3))
    return np.clip(img, 0.0, 1.0)


def generate_stripe_dataset(
    root: Path,
    n_per_class: int,
    seed: int = 0,
    amp_low: float = 0.25,
    amp_high: float = 0.35,
    noise: float = 0.05,
    freq: float = 0.12,
    mix_high: float = 0.0,
) -> list[Path]:
    """Write a stripe dataset under root using the patch naming convention.

    Lower amp_low relative to noise makes some samples genuinely hard.
    mix_high > 0 blends in up to that fraction of the opposite
    orientation per sample, which makes near-ties ambiguous in both
    directions - the way fixtures provoke both false positives and false
    negatives from one trained model.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for label in (0, 1):
        for i in range(n_per_class):
            name = f"s{label}n{i:05d}_idx0_x{i}_y0_class{label}.png"
            rng = derive_rng("stripes", str(seed), name)
            amp = rng.uniform(amp_low, amp_high)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            mix = rng.uniform(0.0, mix_high) if mix_high > 0.0 else 0.0
            img = _stripe_image(label, amp, phase, freq, noise, rng, mix=mix)
            out = root / name
            Image.fromarray(
                np.round(img * 255.0).astype(np.uint8), mode="RGB"
            ).save(out)
            paths.append(out)
    return paths


def generate_empty_population(
    root: Path, n_negative: int, n_positive: int, shard_size: int = 2000
) -> int:
    """Create an empty-file population with valid patch names.

    Scanning and planning never decode pixels, so zero-byte files are
    enough to exercise full-scale counting.  Files are sharded into
    subdirectories to keep directory listings manageable.
    """
    root = Path(root)
    total = 0
    for label, count in ((0, n_negative), (1, n_positive)):
        for i in range(count):
            shard = root / f"shard{label}_{i // shard_size:03d}"
            if i % shard_size == 0:
                shard.mkdir(parents=True, exist_ok=True)
            path = shard / f"p{label}c{i:06d}_idx0_x{i}_y0_class{label}.png"
            os.close(os.open(path, os.O_CREAT | os.O_WRONLY, 0o644))
            total += 1
    return total
