"""Affine augmentation: parameter sampling and image resampling.

The transform composes zoom, rotation, and shear about the image center,
then translates.  Output pixels are produced by inverse mapping with
bilinear interpolation; samples falling outside the source take the
nearest edge value, and results are clamped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from idcloop.data.ingest import Patch
from idcloop.errors import ConfigError
from idcloop.util import derive_rng

# source coordinates this close to an integer are snapped onto it, so
# nominally exact transforms (identity, integer shifts, quarter turns)
# reproduce pixels bit-exactly instead of blending neighbors
SNAP_EPS = 1e-6


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 30.0
    shift_frac: float = 0.2
    shear_strength: float = 0.2
    zoom_low: float = 0.8
    zoom_high: float = 1.2
    copies_per_original: int = 2
    seed: int = 0
    # None draws rotation symmetrically in [-rotation_deg, +rotation_deg];
    # set to 0.0 to restrict to [0, rotation_deg].
    rotation_min: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.shift_frac < 1.0:
            raise ConfigError(f"shift_frac must be in [0, 1), got {self.shift_frac}")
        if not 0.0 < self.zoom_low <= self.zoom_high:
            raise ConfigError(
                f"zoom range invalid: ({self.zoom_low}, {self.zoom_high})"
            )
        if self.copies_per_original < 0:
            raise ConfigError(f"copies_per_original must be >= 0, got {self.copies_per_original}")
        if self.rotation_deg < 0:
            raise ConfigError(f"rotation_deg must be >= 0, got {self.rotation_deg}")
        if self.shear_strength < 0:
            raise ConfigError(f"shear_strength must be >= 0, got {self.shear_strength}")
        if self.rotation_min is not None and self.rotation_min > self.rotation_deg:
            raise ConfigError("rotation_min exceeds rotation_deg")

    @property
    def rotation_low(self) -> float:
        return -self.rotation_deg if self.rotation_min is None else self.rotation_min

    def to_dict(self) -> dict:
        return {
            "rotation_deg": self.rotation_deg,
            "shift_frac": self.shift_frac,
            "shear_strength": self.shear_strength,
            "zoom_low": self.zoom_low,
            "zoom_high": self.zoom_high,
            "copies_per_original": self.copies_per_original,
            "seed": self.seed,
            "rotation_min": self.rotation_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown augment config keys: {sorted(unknown)}")
        return cls(**d)

    def with_seed(self, seed: int) -> "AugmentConfig":
        return replace(self, seed=seed)


class AffineParams(NamedTuple):
    theta_deg: float
    tx: float  # fraction of width
    ty: float  # fraction of height
    shear: float
    zoom: float


IDENTITY_PARAMS = AffineParams(0.0, 0.0, 0.0, 0.0, 1.0)


def sample_affine_params(cfg: AugmentConfig, rng: np.random.Generator) -> AffineParams:
    """Draw one parameter tuple; draw order is fixed for reproducibility."""
    theta = rng.uniform(cfg.rotation_low, cfg.rotation_deg)
    tx = rng.uniform(-cfg.shift_frac, cfg.shift_frac)
    ty = rng.uniform(-cfg.shift_frac, cfg.shift_frac)
    shear = rng.uniform(-cfg.shear_strength, cfg.shear_strength)
    zoom = rng.uniform(cfg.zoom_low, cfg.zoom_high)
    return AffineParams(theta, tx, ty, shear, zoom)


def item_rng(seed: int, patch_id: str, copy_index: int) -> np.random.Generator:
    """Per-item generator so results do not depend on worker scheduling."""
    return derive_rng("augment", str(seed), patch_id, str(copy_index))


def _forward_matrix(params: AffineParams) -> np.ndarray:
    """2x2 linear part: zoom . rotation . shear."""
    th = math.radians(params.theta_deg)
    c, s = math.cos(th), math.sin(th)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    shear = np.array([[1.0, params.shear], [0.0, 1.0]], dtype=np.float64)
    return params.zoom * (rot @ shear)


def _inverse_2x2(a: np.ndarray) -> np.ndarray:
    # adjugate over determinant; det = zoom^2 > 0 always
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    return np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]], dtype=np.float64) / det


def apply_affine(patch: Patch, params: AffineParams) -> Patch:
    """Resample a patch through the affine transform.

    Forward model: p' = A (p - c) + c + t with A = zoom.rotation.shear,
    c the image center, t the pixel translation.  Each output pixel is
    filled by inverse-mapping to source coordinates.
    """
    pixels = patch.pixels
    _, h, w = pixels.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    tx_px = params.tx * w
    ty_px = params.ty * h

    a_inv = _inverse_2x2(_forward_matrix(params))
    xs_out, ys_out = np.meshgrid(
        np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64)
    )
    dx = xs_out - cx - tx_px
    dy = ys_out - cy - ty_px
    xs = a_inv[0, 0] * dx + a_inv[0, 1] * dy + cx
    ys = a_inv[1, 0] * dx + a_inv[1, 1] * dy + cy

    # snap near-integer coordinates so nominally exact maps stay exact
    for coords in (xs, ys):
        nearest = np.round(coords)
        close = np.abs(coords - nearest) <= SNAP_EPS
        coords[close] = nearest[close]

    # nearest-edge fill: clamping source coordinates replicates the border
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)

    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0

    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy

    src = pixels.astype(np.float64)
    out = (
        src[:, y0, x0] * w00
        + src[:, y0, x1] * w01
        + src[:, y1, x0] * w10
        + src[:, y1, x1] * w11
    )
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return Patch(
        pixels=np.ascontiguousarray(out),
        record=patch.record,
        augmented_from=patch.augmented_from,
        copy_index=patch.copy_index,
    )
