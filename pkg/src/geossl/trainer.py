"""SSL training loop: batch assembly per objective, SGD, checkpoints.

Determinism contract: every random draw comes from a stream keyed on
(seed, purpose, epoch, sample id), so reruns with equal config+seed give
byte-identical checkpoints and loss curves, and geo mode with no eligible
neighbours reproduces standard mode exactly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import objectives as obj
from . import tensor as T
from .encoder import (EncoderParams, ModelState, ParamTensors, backbone,
                      init_state, load_checkpoint, predict, project,
                      prototype_logits, save_checkpoint)
from .survey import GeneratorConfig, SpatialIndex, SurveyManifest, generate_survey, load_manifest
from .views import AugmentParams, SamplerConfig, make_multicrop, make_pair, select_partner

PAIR_OBJECTIVES = ("simclr", "simsiam", "moco")
MULTICROP_OBJECTIVES = ("swav", "deepcluster", "dino")
OBJECTIVES = PAIR_OBJECTIVES + MULTICROP_OBJECTIVES


class TrainerError(Exception):
    pass


@dataclass
class OptimConfig:
    lr: Optional[float] = None        # default 0.03 * N / 64
    momentum: float = 0.9
    weight_decay: float = 1e-4


@dataclass
class RunConfig:
    objective: str = "simclr"
    dataset_path: Optional[str] = None
    generator: Optional[GeneratorConfig] = None
    generator_seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    loss: obj.LossConfig = field(default_factory=obj.LossConfig)
    augment: AugmentParams = field(default_factory=AugmentParams)
    encoder: EncoderParams = field(default_factory=EncoderParams)
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    batch_size: int = 16
    epochs: int = 5
    seed: int = 0
    out_dir: str = "runs/run"

    def validate(self):
        if self.objective not in OBJECTIVES:
            raise TrainerError(
                f"unknown objective '{self.objective}'; valid: {', '.join(OBJECTIVES)}")
        if self.dataset_path is None and self.generator is None:
            raise TrainerError("need dataset_path or generator")
        self.sampler.validate()
        self.loss.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if d.get("generator") is not None:
            d["generator"] = GeneratorConfig(**d["generator"])
        for key, typ in (("sampler", SamplerConfig), ("loss", obj.LossConfig),
                         ("augment", AugmentParams), ("encoder", EncoderParams),
                         ("optimizer", OptimConfig)):
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        if "augment" in d and isinstance(d["augment"].crop_scale, list):
            d["augment"].crop_scale = tuple(d["augment"].crop_scale)
        if "augment" in d and isinstance(d["augment"].blur_sigma, list):
            d["augment"].blur_sigma = tuple(d["augment"].blur_sigma)
        return cls(**d)


@dataclass
class RunRecord:
    out_dir: str
    epochs: list = field(default_factory=list)   # dicts: epoch, loss, wall_ms, ckpt
    config: dict = field(default_factory=dict)
    version: str = "geossl-0.1.0"

    @property
    def final_checkpoint(self) -> str:
        return self.epochs[-1]["ckpt"] if self.epochs else str(Path(self.out_dir) / "ckpt_init.bin")


class SgdMomentum:
    def __init__(self, cfg: OptimConfig, n_params: int, batch_size: int):
        self.mu = cfg.momentum
        self.wd = cfg.weight_decay
        self.base_lr = cfg.lr if cfg.lr is not None else 0.03 * batch_size / 64
        self.velocity = np.zeros(n_params, dtype=np.float32)

    def lr_at(self, step: int, total_steps: int) -> float:
        if total_steps <= 1:
            return self.base_lr
        return self.base_lr * 0.5 * (1 + math.cos(math.pi * step / (total_steps - 1)))

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float):
        g = grad + self.wd * params
        self.velocity = self.mu * self.velocity + g
        params -= (lr * self.velocity).astype(np.float32)


def _load_dataset(cfg: RunConfig) -> SurveyManifest:
    if cfg.dataset_path is not None:
        return load_manifest(cfg.dataset_path)
    return generate_survey(cfg.generator, cfg.generator_seed)


def _center_crop(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    s = min(size, h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    return np.ascontiguousarray(img[y0:y0 + s, x0:x0 + s])


def _encode_all(state: ModelState, manifest: SurveyManifest, crop: int,
                batch: int = 64) -> np.ndarray:
    outs = []
    n = len(manifest)
    for lo in range(0, n, batch):
        imgs = np.stack([_center_crop(manifest.image(i), crop)
                         for i in range(lo, min(lo + batch, n))])
        pt = ParamTensors(state, trainable=False)
        outs.append(backbone(pt, imgs).data)
    return np.concatenate(outs, axis=0)


def _build_viewsets(cfg: RunConfig, manifest, index, epoch: int, ids) -> list:
    multicrop = cfg.objective in MULTICROP_OBJECTIVES
    out = []
    for sid in ids:
        rng = np.random.default_rng([cfg.seed, 3, epoch, int(sid)])
        j = select_partner(int(sid), cfg.sampler, index, rng)
        images = (manifest.image(int(sid)), manifest.image(j))
        if multicrop:
            out.append(make_multicrop(int(sid), j, images, cfg.augment, rng))
        else:
            out.append(make_pair(int(sid), j, images, cfg.augment, rng))
    return out


def _pair_batch_images(viewsets) -> np.ndarray:
    """Batch arrangement: first augmentations 0..N-1, then second N..2N-1."""
    v1 = [vs.globals_[0] for vs in viewsets]
    v2 = [vs.globals_[1] for vs in viewsets]
    return np.stack(v1 + v2)


def train(cfg: RunConfig) -> RunRecord:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest = _load_dataset(cfg)
    index = SpatialIndex(manifest) if cfg.sampler.mode == "geo" else None

    enc_cfg = cfg.encoder
    if cfg.objective == "deepcluster" and enc_cfg.n_prototypes != cfg.loss.n_clusters:
        enc_cfg.n_prototypes = cfg.loss.n_clusters
    state = init_state(enc_cfg, cfg.seed)

    teacher = obj.TeacherState.from_student(state) if cfg.objective in ("moco", "dino") else None
    queue = obj.MemoryQueue(cfg.loss.queue_capacity, enc_cfg.latent_dim) \
        if cfg.objective == "moco" else None

    resolved = cfg.to_dict()
    (out / "config.json").write_text(json.dumps(resolved, sort_keys=True, indent=2))

    record = RunRecord(out_dir=str(out), config=resolved)
    events = open(out / "events.jsonl", "w")

    def log_event(kind, **kw):
        events.write(json.dumps({"event": kind, **kw}, sort_keys=True) + "\n")
        events.flush()

    def ckpt_extra():
        extra = {"objective": cfg.objective, "global_size": cfg.augment.global_size}
        arrays = {}
        if teacher is not None:
            arrays["teacher_params"] = teacher.model.params
            arrays["center"] = teacher.center
        if queue is not None:
            d = queue.state_dict()
            arrays["queue_keys"] = d["keys"]
            extra["queue_size"] = d["size"]
            extra["queue_cursor"] = d["cursor"]
        return extra, arrays

    extra, arrays = ckpt_extra()
    save_checkpoint(state, out / "ckpt_init.bin", extra=extra, arrays=arrays)
    log_event("start", objective=cfg.objective, n_patches=len(manifest))

    n = len(manifest)
    steps_per_epoch = max(1, n // cfg.batch_size)
    total_steps = max(1, cfg.epochs * steps_per_epoch)
    optim = SgdMomentum(cfg.optimizer, state.n_params, cfg.batch_size)

    loss_rows = []
    step = 0
    pseudolabels = None
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        if cfg.objective == "deepcluster" and not cfg.loss.cluster_every_step:
            latents = _encode_all(state, manifest, cfg.augment.global_size)
            pseudolabels, _ = obj.kmeans(latents, cfg.loss.n_clusters,
                                         seed=cfg.seed * 100000 + epoch)
        shuffle_rng = np.random.default_rng([cfg.seed, 2, epoch])
        order = shuffle_rng.permutation(n)
        epoch_losses = []
        for b0 in range(0, steps_per_epoch * cfg.batch_size, cfg.batch_size):
            ids = order[b0:b0 + cfg.batch_size]
            if len(ids) < 2:
                continue
            if cfg.objective == "deepcluster" and cfg.loss.cluster_every_step:
                latents = _encode_all(state, manifest, cfg.augment.global_size)
                pseudolabels, _ = obj.kmeans(latents, cfg.loss.n_clusters,
                                             seed=cfg.seed * 100000 + step)
            viewsets = _build_viewsets(cfg, manifest, index, epoch, ids)
            pt = ParamTensors(state)
            loss = _objective_loss(cfg, pt, state, teacher, queue, viewsets,
                                   ids, pseudolabels)
            lv = loss.item()
            if not np.isfinite(lv):
                raise TrainerError(
                    f"non-finite loss {lv} at epoch {epoch} batch ids {list(map(int, ids))}")
            loss.backward()
            grad = pt.grad_flat()
            optim.step(state.params, grad, optim.lr_at(step, total_steps))
            if teacher is not None:
                obj.ema_update(teacher, state, cfg.loss.momentum)
            epoch_losses.append(lv)
            step += 1
        mean_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        wall_ms = (time.perf_counter() - t0) * 1000
        ckpt_path = out / f"ckpt_{epoch:04d}.bin"
        extra, arrays = ckpt_extra()
        save_checkpoint(state, ckpt_path, extra=extra, arrays=arrays)
        loss_rows.append((epoch, mean_loss))
        record.epochs.append({"epoch": epoch, "loss": mean_loss,
                              "wall_ms": wall_ms, "ckpt": str(ckpt_path)})
        log_event("epoch", epoch=epoch, loss=mean_loss, wall_ms=wall_ms)

    # wall time lives in events.jsonl; the CSV stays byte-stable across reruns
    csv = "epoch,loss\n" + "".join(f"{e},{l:.8f}\n" for e, l in loss_rows)
    (out / "loss.csv").write_text(csv)
    log_event("done", epochs=cfg.epochs)
    events.close()
    return record


def _objective_loss(cfg, pt, state, teacher, queue, viewsets, ids, pseudolabels):
    name = cfg.objective
    if name == "simclr":
        imgs = _pair_batch_images(viewsets)
        z = project(pt, backbone(pt, imgs))
        m = obj.build_similarity_matrix(z)
        return obj.nt_xent(m, cfg.loss.tau)

    if name == "simsiam":
        imgs = _pair_batch_images(viewsets)
        n = len(viewsets)
        z = project(pt, backbone(pt, imgs))
        z1, z2 = z[:n], z[n:]
        p1, p2 = predict(pt, z1), predict(pt, z2)
        return obj.simsiam_loss(p1, z1, p2, z2)

    if name == "moco":
        v1 = np.stack([vs.globals_[0] for vs in viewsets])
        v2 = np.stack([vs.globals_[1] for vs in viewsets])
        q = project(pt, backbone(pt, v1))
        tp = ParamTensors(teacher.model, trainable=False)
        k_plus = project(tp, backbone(tp, v2)).data
        return obj.moco_loss(q, k_plus, queue, cfg.loss.tau)

    n = len(viewsets)
    g_imgs = _pair_batch_images(viewsets)
    l_imgs = np.stack([v for c in range(cfg.augment.n_local)
                       for v in (vs.locals_[c] for vs in viewsets)])

    if name == "swav":
        zg = project(pt, backbone(pt, g_imgs))
        zl = project(pt, backbone(pt, l_imgs))
        lg = prototype_logits(pt, zg)
        ll = prototype_logits(pt, zl)
        globals_logits = [lg[:n], lg[n:]]
        locals_logits = [ll[c * n:(c + 1) * n] for c in range(cfg.augment.n_local)]
        return obj.swav_loss(globals_logits, globals_logits + locals_logits, cfg.loss)

    if name == "deepcluster":
        labels = pseudolabels[ids]
        zg = project(pt, backbone(pt, g_imgs))
        zl = project(pt, backbone(pt, l_imgs))
        lg = prototype_logits(pt, zg)
        ll = prototype_logits(pt, zl)
        views = [lg[:n], lg[n:]] + [ll[c * n:(c + 1) * n]
                                    for c in range(cfg.augment.n_local)]
        total = None
        for logits in views:
            probs = T.softmax(logits * (1.0 / cfg.loss.tau), axis=1)
            term = obj.deepcluster_loss(probs, labels)
            total = term if total is None else total + term
        return total * (1.0 / len(views))

    if name == "dino":
        zg = project(pt, backbone(pt, g_imgs))
        zl = project(pt, backbone(pt, l_imgs))
        lg = prototype_logits(pt, zg)
        ll = prototype_logits(pt, zl)
        student_logits = [lg[:n], lg[n:]] + [ll[c * n:(c + 1) * n]
                                             for c in range(cfg.augment.n_local)]
        tp = ParamTensors(teacher.model, trainable=False)
        tzg = project(tp, backbone(tp, g_imgs))
        tlg = prototype_logits(tp, tzg).data
        teacher_logits = [tlg[:n], tlg[n:]]
        return obj.dino_loss(student_logits, teacher_logits, teacher, cfg.loss)

    raise TrainerError(f"unknown objective '{name}'")


def extract_latents(checkpoint, manifest: SurveyManifest):
    """Deterministic latents for every patch, in manifest order."""
    if isinstance(checkpoint, (str, Path)):
        state, extra, _ = load_checkpoint(checkpoint)
        crop = int(extra.get("global_size", 64))
    else:
        state, crop = checkpoint
    table = _encode_all(state, manifest, crop)
    ids = np.arange(len(manifest))
    return table, ids
