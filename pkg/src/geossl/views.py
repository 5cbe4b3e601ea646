"""Positive-view construction: standard and location-regularised.

Geo mode draws the second view from a different image within r_loc metres
of the anchor; if no neighbour qualifies the sampler falls back to the
anchor itself, reproducing the standard pipeline exactly (including its
rng stream, since the fallback consumes no draws).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np

from .survey import SpatialIndex


class ViewError(Exception):
    pass


@dataclass
class SamplerConfig:
    mode: str = "standard"            # standard | geo
    r_loc: float = 0.0                # metres, geo mode only
    seed: int = 0

    def validate(self):
        if self.mode not in ("standard", "geo"):
            raise ViewError(f"unknown sampler mode '{self.mode}'")
        if self.mode == "geo" and self.r_loc <= 0:
            raise ViewError("geo mode requires r_loc > 0")


@dataclass
class AugmentParams:
    crop_scale: tuple = (0.5, 1.0)    # area fraction of the source image
    hflip_p: float = 0.5
    vflip_p: float = 0.5
    blur_sigma: tuple = (0.0, 0.0)    # max 0 disables blur
    brightness: float = 0.0           # +- uniform delta
    contrast: float = 0.0
    hue: float = 0.0                  # fraction of the hue circle
    global_size: int = 64
    local_size: int = 28
    n_local: int = 4

    def validate_multicrop(self):
        if self.global_size ** 2 < 5 * self.local_size ** 2:
            raise ViewError(
                f"global crops need >= 5x local pixels: {self.global_size}^2 < 5*{self.local_size}^2")
        if self.n_local < 1:
            raise ViewError("multi-crop needs n_local >= 1")


@dataclass
class ViewSet:
    source_i: int
    source_j: int
    globals_: list = field(default_factory=list)
    locals_: list = field(default_factory=list)
    provenance: list = field(default_factory=list)   # source id per view, globals first


def select_partner(i: int, cfg: SamplerConfig, index: Optional[SpatialIndex],
                   rng: np.random.Generator) -> int:
    cfg.validate()
    if cfg.mode == "standard":
        return i
    candidates = sorted(index.radius_query(i, cfg.r_loc))
    if not candidates:
        return i
    return int(candidates[rng.integers(len(candidates))])


def _resize(img: np.ndarray, size: int) -> np.ndarray:
    if img.shape[0] == size and img.shape[1] == size:
        return img
    return cv2.resize(img, (size, size), interpolation=cv2.INTER_LINEAR)


def augment(image: np.ndarray, ap: AugmentParams, rng: np.random.Generator,
            size: Optional[int] = None) -> np.ndarray:
    """Random resized crop -> flips -> colour jitter -> blur.

    Identity when crop covers the full frame, probabilities are 0 and
    jitter/blur ranges are 0.
    """
    size = ap.global_size if size is None else size
    h, w = image.shape[:2]
    if size > h or size > w:
        raise ViewError(f"crop size {size} exceeds image {h}x{w}")

    lo, hi = ap.crop_scale
    scale = rng.uniform(lo, hi)
    side = int(round(np.sqrt(scale) * min(h, w)))
    side = max(2, min(side, min(h, w)))
    y0 = int(rng.integers(h - side + 1))
    x0 = int(rng.integers(w - side + 1))
    out = image[y0:y0 + side, x0:x0 + side]
    out = _resize(out.astype(np.float32), size)

    if ap.hflip_p > 0 and rng.random() < ap.hflip_p:
        out = out[:, ::-1]
    if ap.vflip_p > 0 and rng.random() < ap.vflip_p:
        out = out[::-1, :]

    if ap.brightness > 0:
        out = out + rng.uniform(-ap.brightness, ap.brightness)
    if ap.contrast > 0:
        f = 1.0 + rng.uniform(-ap.contrast, ap.contrast)
        out = (out - out.mean()) * f + out.mean()
    if ap.hue > 0 and out.ndim == 3 and out.shape[2] == 3:
        delta = rng.uniform(-ap.hue, ap.hue) * 360.0
        hsv = cv2.cvtColor(np.clip(out, 0, 1).astype(np.float32), cv2.COLOR_RGB2HSV)
        hsv[:, :, 0] = np.mod(hsv[:, :, 0] + delta, 360.0)
        out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)

    if ap.blur_sigma[1] > 0:
        sigma = rng.uniform(*ap.blur_sigma)
        if sigma > 1e-3:
            out = cv2.GaussianBlur(out, (0, 0), sigma)

    out = np.ascontiguousarray(out, dtype=np.float32)
    return np.clip(out, 0.0, 1.0)


def make_pair(i: int, j: int, images: tuple, ap: AugmentParams,
              rng: np.random.Generator) -> ViewSet:
    """Two global views: one from image i, one from image j."""
    img_i, img_j = images
    v1 = augment(img_i, ap, rng)
    v2 = augment(img_j, ap, rng)
    return ViewSet(source_i=i, source_j=j, globals_=[v1, v2], provenance=[i, j])


def make_multicrop(i: int, j: int, images: tuple, ap: AugmentParams,
                   rng: np.random.Generator) -> ViewSet:
    """Two globals (from i and j) plus n_local locals, all from the anchor i."""
    ap.validate_multicrop()
    img_i, img_j = images
    g1 = augment(img_i, ap, rng)
    g2 = augment(img_j, ap, rng)
    locals_ = [augment(img_i, ap, rng, size=ap.local_size) for _ in range(ap.n_local)]
    return ViewSet(source_i=i, source_j=j, globals_=[g1, g2], locals_=locals_,
                   provenance=[i, j] + [i] * ap.n_local)
