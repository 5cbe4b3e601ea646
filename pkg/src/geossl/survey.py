"""Synthetic geo-tagged survey generation, manifest I/O and radius queries.

A survey is a lawnmower track over a habitat map built from Voronoi cells
seeded by a Poisson point process. Each cell carries a class; each patch
image is drawn from its class's texture model plus per-patch observation
noise. The proximity structure (nearby patches usually share a class) is
what the geo samplers exploit.
"""

from __future__ import annotations

import base64
import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

BLOB_MAGIC = b"GSSL"


class SurveyError(Exception):
    pass


@dataclass
class GeneratorConfig:
    n_classes: int = 3
    habitat_scale_m: float = 40.0       # mean Voronoi cell diameter L
    track_spacing_m: float = 4.0
    patch_interval_m: float = 2.0
    n_patches: int = 2000
    image_size: int = 64                # square H = W
    channels: int = 3
    class_weights: Optional[list] = None  # per-class Voronoi seed weights
    texture_noise_amp: float = 0.18     # band-limited noise amplitude
    speckle_amp: float = 0.35
    observation_noise_std: float = 0.04
    patch_tint_std: float = 0.10        # per-patch illumination nuisance
    class_color_amp: float = 0.0        # faint per-class colour cast

    def validate(self):
        if self.n_patches <= 0:
            raise SurveyError("n_patches must be positive")
        if self.habitat_scale_m <= 0:
            raise SurveyError("habitat_scale_m must be positive")
        if self.n_classes < 2:
            raise SurveyError("need at least 2 classes")
        if self.class_weights is not None and len(self.class_weights) != self.n_classes:
            raise SurveyError("class_weights length must equal n_classes")


@dataclass
class GeoPatch:
    id: int
    northing: float
    easting: float
    label: Optional[int] = None
    image: Optional[np.ndarray] = None   # H×W×C float32 in [0,1]
    image_ref: Optional[str] = None


@dataclass
class SurveyManifest:
    patches: list
    class_names: list
    patch_interval_m: float
    generator: Optional[dict] = None
    seed: Optional[int] = None
    base_dir: Optional[Path] = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.patches)

    def image(self, pid: int) -> np.ndarray:
        p = self.patches[pid]
        if p.id != pid:
            raise SurveyError(f"unknown patch id {pid}")
        if p.image is not None:
            return p.image
        if pid in self._cache:
            return self._cache[pid]
        img = _load_image_ref(p.image_ref, self.base_dir)
        self._cache[pid] = img
        return img

    def positions(self) -> np.ndarray:
        return np.array([[p.northing, p.easting] for p in self.patches], dtype=np.float64)

    def labels(self) -> np.ndarray:
        return np.array([-1 if p.label is None else p.label for p in self.patches])


# ------------------------------------------------------------------ generator


# (sigma_across, sigma_along) per class: horizontal ripples, vertical
# ripples, isotropic blobs; repeats at double coarseness beyond 3 classes
_CLASS_TEXTURE_SIGMAS = ((2.0, 0.6), (0.6, 2.0), (1.2, 1.2))


def _patch_image(cls: int, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Class signal lives in texture statistics, not in mean colour.

    All classes share the base colour; each class has its own band-limited
    noise spatial frequency and speckle density. A per-patch illumination
    tint (constant over the patch, random between patches) acts as the
    nuisance factor that same-image positive pairs share but geo pairs
    do not. An optional faint class colour cast sits well below the tint
    amplitude: invisible to a probe on raw pixels once tint varies, but a
    consistent cue for positives drawn from the same habitat.
    """
    h = w = cfg.image_size
    c = cfg.channels
    img = np.full((h, w, c), 0.45, dtype=np.float32)

    if cfg.class_color_amp > 0:
        # deterministic unit direction per class, orthogonal-ish across classes
        cast_rng = np.random.default_rng([0xCA57, int(cls)])
        direction = cast_rng.standard_normal(c).astype(np.float32)
        direction /= max(np.linalg.norm(direction), 1e-6)
        img += cfg.class_color_amp * direction

    # band-limited texture: white noise low-passed at a class-specific
    # anisotropic scale (ripple direction + coarseness carry the class),
    # renormalized so every class has the same marginal variance
    sx, sy = _CLASS_TEXTURE_SIGMAS[cls % len(_CLASS_TEXTURE_SIGMAS)]
    scale = 2.0 ** (cls // len(_CLASS_TEXTURE_SIGMAS))
    noise = rng.standard_normal((h, w)).astype(np.float32)
    noise = cv2.GaussianBlur(noise, (0, 0), sigmaX=sx * scale, sigmaY=sy * scale)
    noise /= max(noise.std(), 1e-6)
    img += cfg.texture_noise_amp * noise[:, :, None]

    # class-dependent speckle density
    density = 0.01 + 0.02 * cls
    mask = rng.random((h, w)) < density
    img[mask] += cfg.speckle_amp * rng.choice([-1.0, 1.0], size=int(mask.sum()))[:, None]

    img += rng.normal(0.0, cfg.patch_tint_std, size=c).astype(np.float32)
    img += rng.normal(0.0, cfg.observation_noise_std, size=(h, w, c)).astype(np.float32)
    return np.clip(img, 0.0, 1.0)


def generate_survey(cfg: GeneratorConfig, seed: int) -> SurveyManifest:
    """Build a synthetic survey; deterministic under (cfg, seed)."""
    cfg.validate()
    rng = np.random.default_rng([int(seed), 0x5EA])

    # lawnmower track over a roughly square area
    n = cfg.n_patches
    side = math.sqrt(max(n * cfg.patch_interval_m * cfg.track_spacing_m, 1.0))
    per_row = max(2, int(round(side / cfg.patch_interval_m)))
    positions = []
    row = 0
    while len(positions) < n:
        northing = row * cfg.track_spacing_m
        cols = range(per_row) if row % 2 == 0 else range(per_row - 1, -1, -1)
        for c_ in cols:
            positions.append((northing, c_ * cfg.patch_interval_m))
            if len(positions) == n:
                break
        row += 1
    pos = np.array(positions, dtype=np.float64)

    # habitat map: Voronoi over Poisson seeds with mean cell diameter L
    extent_n = pos[:, 0].max() + cfg.habitat_scale_m
    extent_e = pos[:, 1].max() + cfg.habitat_scale_m
    area = extent_n * extent_e
    lam = area / (cfg.habitat_scale_m ** 2)
    n_seeds = max(2, int(rng.poisson(lam)))
    seeds = np.column_stack([
        rng.uniform(-cfg.habitat_scale_m / 2, extent_n, n_seeds),
        rng.uniform(-cfg.habitat_scale_m / 2, extent_e, n_seeds),
    ])
    weights = cfg.class_weights
    if weights is None:
        p = None
    else:
        w = np.asarray(weights, dtype=np.float64)
        p = w / w.sum()
    seed_classes = rng.choice(cfg.n_classes, size=n_seeds, p=p)

    d2 = ((pos[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    labels = seed_classes[np.argmin(d2, axis=1)]

    patches = []
    for pid in range(n):
        img_rng = np.random.default_rng([int(seed), 1, pid])
        img = _patch_image(int(labels[pid]), cfg, img_rng)
        patches.append(GeoPatch(
            id=pid,
            northing=float(pos[pid, 0]),
            easting=float(pos[pid, 1]),
            label=int(labels[pid]),
            image=img,
        ))

    class_names = [f"class_{k}" for k in range(cfg.n_classes)]
    return SurveyManifest(
        patches=patches,
        class_names=class_names,
        patch_interval_m=cfg.patch_interval_m,
        generator=asdict(cfg),
        seed=int(seed),
    )


# ---------------------------------------------------------------- blob format


def encode_blob(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3:
        raise SurveyError("image blob must be H×W×C")
    h, w, c = img.shape
    header = BLOB_MAGIC + struct.pack("<III", h, w, c)
    return header + img.astype("<f4").tobytes()


def decode_blob(buf: bytes) -> np.ndarray:
    if buf[:4] != BLOB_MAGIC:
        raise SurveyError("bad image blob magic")
    h, w, c = struct.unpack("<III", buf[4:16])
    data = np.frombuffer(buf[16:], dtype="<f4")
    if data.size != h * w * c:
        raise SurveyError("image blob payload size mismatch")
    return data.reshape(h, w, c).astype(np.float32)


def _load_image_ref(ref: Optional[str], base_dir: Optional[Path]) -> np.ndarray:
    if ref is None:
        raise SurveyError("patch has no image payload")
    if ref.startswith("inline:"):
        return decode_blob(base64.b64decode(ref[len("inline:"):]))
    if base_dir is None:
        raise SurveyError("file image_ref requires a manifest directory")
    return decode_blob((base_dir / ref).read_bytes())


# ------------------------------------------------------------------- manifest


def save_manifest(manifest: SurveyManifest, out_dir) -> Path:
    """Write manifest.jsonl + per-patch blobs under out_dir."""
    out = Path(out_dir)
    (out / "blobs").mkdir(parents=True, exist_ok=True)
    header = {
        "class_names": manifest.class_names,
        "patch_interval_m": manifest.patch_interval_m,
        "generator": manifest.generator,
        "seed": manifest.seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for p in manifest.patches:
        ref = f"blobs/{p.id:06d}.gsb"
        (out / ref).write_bytes(encode_blob(manifest.image(p.id)))
        lines.append(json.dumps({
            "id": p.id,
            "northing_m": p.northing,
            "easting_m": p.easting,
            "label": p.label,
            "image_ref": ref,
        }, sort_keys=True))
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    return out / "manifest.jsonl"


def load_manifest(path) -> SurveyManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    if not path.exists():
        raise SurveyError(f"no manifest at {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise SurveyError("no patches: manifest file is empty")
    header = json.loads(lines[0])
    if "class_names" not in header:
        raise SurveyError("manifest missing header record")
    n_classes = len(header["class_names"])
    patches = []
    seen = set()
    for k, ln in enumerate(lines[1:]):
        try:
            row = json.loads(ln)
        except json.JSONDecodeError as e:
            raise SurveyError(f"malformed row {k}: {e}") from e
        for fld in ("id", "northing_m", "easting_m", "image_ref"):
            if fld not in row:
                raise SurveyError(f"row {k} missing field '{fld}'")
        pid = int(row["id"])
        if pid in seen:
            raise SurveyError(f"duplicate patch id {pid} at row {k}")
        seen.add(pid)
        label = row.get("label")
        if label is not None and not (0 <= int(label) < n_classes):
            raise SurveyError(f"row {k}: label {label} out of range")
        patches.append(GeoPatch(
            id=pid,
            northing=float(row["northing_m"]),
            easting=float(row["easting_m"]),
            label=None if label is None else int(label),
            image_ref=row["image_ref"],
        ))
    if not patches:
        raise SurveyError("no patches")
    patches.sort(key=lambda p: p.id)
    if [p.id for p in patches] != list(range(len(patches))):
        raise SurveyError("patch ids must be dense 0..n-1")
    return SurveyManifest(
        patches=patches,
        class_names=header["class_names"],
        patch_interval_m=float(header["patch_interval_m"]),
        generator=header.get("generator"),
        seed=header.get("seed"),
        base_dir=path.parent,
    )


# --------------------------------------------------------------- spatial index


class SpatialIndex:
    """Uniform grid over (easting, northing) for radius queries."""

    def __init__(self, manifest: SurveyManifest, cell_size: Optional[float] = None):
        self.pos = manifest.positions()   # (n, 2) northing, easting
        if cell_size is None:
            cell_size = max(manifest.patch_interval_m * 4.0, 1.0)
        self.cell = float(cell_size)
        self.grid: dict = {}
        for pid, (n_, e_) in enumerate(self.pos):
            key = (int(math.floor(e_ / self.cell)), int(math.floor(n_ / self.cell)))
            self.grid.setdefault(key, []).append(pid)

    def radius_query(self, i: int, r: float) -> set:
        """Ids j != i with planar distance strictly less than r."""
        if not (0 <= i < len(self.pos)):
            raise SurveyError(f"unknown patch id {i}")
        if r <= 0:
            raise SurveyError("radius must be positive")
        n_i, e_i = self.pos[i]
        reach = int(math.ceil(r / self.cell))
        cx = int(math.floor(e_i / self.cell))
        cy = int(math.floor(n_i / self.cell))
        out = set()
        r2 = r * r
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                for j in self.grid.get((cx + dx, cy + dy), ()):
                    if j == i:
                        continue
                    dn = self.pos[j, 0] - n_i
                    de = self.pos[j, 1] - e_i
                    if dn * dn + de * de < r2:
                        out.add(j)
        return out


def radius_query_bruteforce(manifest: SurveyManifest, i: int, r: float) -> set:
    """Reference scan of the distance constraint, for oracle checks."""
    pos = manifest.positions()
    d = np.sqrt(((pos - pos[i]) ** 2).sum(axis=1))
    return {int(j) for j in np.nonzero(d < r)[0] if j != i}
