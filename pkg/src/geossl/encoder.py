"""Tiny convolutional encoder with projector/predictor/prototype heads.

Parameters live in one flat float32 vector with a named layout map, so the
optimizer, EMA teacher and checkpointing all operate on plain arrays.
No batch statistics anywhere: forward passes are sample-independent, which
keeps gradient checks exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T


class EncoderError(Exception):
    pass


@dataclass
class EncoderParams:
    conv_widths: list = field(default_factory=lambda: [16, 32, 64])
    latent_dim: int = 128
    proj_hidden: int = 128
    pred_hidden: int = 64
    n_prototypes: int = 32
    in_channels: int = 3

    def validate(self):
        if self.latent_dim < 8:
            raise EncoderError("latent_dim must be >= 8")


def _layout(cfg: EncoderParams) -> dict:
    names = {}
    offset = 0

    def reg(name, shape):
        nonlocal offset
        size = int(np.prod(shape))
        names[name] = (offset, tuple(shape))
        offset += size

    cin = cfg.in_channels
    for s, cout in enumerate(cfg.conv_widths):
        reg(f"conv{s}.w", (3, 3, cin, cout))
        reg(f"conv{s}.b", (cout,))
        cin = cout
    reg("fc.w", (cin, cfg.latent_dim))
    reg("fc.b", (cfg.latent_dim,))
    d = cfg.latent_dim
    reg("proj.w1", (d, cfg.proj_hidden))
    reg("proj.b1", (cfg.proj_hidden,))
    reg("proj.w2", (cfg.proj_hidden, d))
    reg("proj.b2", (d,))
    reg("pred.w1", (d, cfg.pred_hidden))
    reg("pred.b1", (cfg.pred_hidden,))
    reg("pred.w2", (cfg.pred_hidden, d))
    reg("pred.b2", (d,))
    reg("protos", (cfg.n_prototypes, d))
    return names


@dataclass
class ModelState:
    params: np.ndarray                    # flat float32
    layout: dict                          # name -> (offset, shape)
    config: EncoderParams
    seed: int

    def view(self, name: str) -> np.ndarray:
        offset, shape = self.layout[name]
        size = int(np.prod(shape))
        return self.params[offset:offset + size].reshape(shape)

    def copy(self) -> "ModelState":
        return ModelState(self.params.copy(), self.layout, self.config, self.seed)

    @property
    def n_params(self) -> int:
        return self.params.size


def init_state(cfg: EncoderParams, seed: int) -> ModelState:
    """He-uniform conv/linear weights, zero biases, unit-norm prototype rows."""
    cfg.validate()
    layout = _layout(cfg)
    total = sum(int(np.prod(s)) for _, s in layout.values())
    params = np.zeros(total, dtype=np.float32)
    state = ModelState(params, layout, cfg, int(seed))
    rng = np.random.default_rng([int(seed), 0xE0C])
    for name, (_, shape) in layout.items():
        v = state.view(name)
        if name == "protos":
            rows = rng.standard_normal(shape).astype(np.float32)
            rows /= np.linalg.norm(rows, axis=1, keepdims=True)
            v[...] = rows
        elif name.split(".")[-1].startswith("b"):
            v[...] = 0.0
        else:
            fan_in = int(np.prod(shape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            v[...] = rng.uniform(-limit, limit, size=shape).astype(np.float32)
    return state


class ParamTensors:
    """Per-forward-pass view of a ModelState as autodiff tensors.

    One Tensor per parameter name; grads are collected back into a flat
    vector aligned with the state layout. Non-trainable binding (teacher)
    produces constant tensors.
    """

    def __init__(self, state: ModelState, trainable: bool = True):
        self.state = state
        self.trainable = trainable
        self.tensors: dict = {}

    def __getitem__(self, name: str) -> T.Tensor:
        if name not in self.tensors:
            self.tensors[name] = T.Tensor(self.state.view(name),
                                          requires_grad=self.trainable)
        return self.tensors[name]

    def grad_flat(self) -> np.ndarray:
        g = np.zeros_like(self.state.params)
        for name, t in self.tensors.items():
            if t.grad is not None:
                offset, shape = self.state.layout[name]
                size = int(np.prod(shape))
                g[offset:offset + size] += t.grad.reshape(-1)
        return g


def backbone(pt: ParamTensors, images: np.ndarray) -> T.Tensor:
    """conv3x3+relu+avgpool stages, global average pool, linear to D."""
    cfg = pt.state.config
    x = T.Tensor(np.asarray(images, dtype=np.float32))
    if x.ndim != 4:
        raise EncoderError("expected images of shape B×H×W×C")
    for s in range(len(cfg.conv_widths)):
        if x.shape[1] < 2 or x.shape[2] < 2:
            raise EncoderError("spatial size too small for pooling depth")
        x = T.conv2d(x, pt[f"conv{s}.w"], pt[f"conv{s}.b"], stride=1, padding=1)
        x = T.relu(x)
        x = T.avg_pool2d(x, 2)
    x = x.mean(axis=1).mean(axis=1)            # B×C global average pool
    return x @ pt["fc.w"] + pt["fc.b"]


def project(pt: ParamTensors, z: T.Tensor) -> T.Tensor:
    h = T.relu(z @ pt["proj.w1"] + pt["proj.b1"])
    return h @ pt["proj.w2"] + pt["proj.b2"]


def predict(pt: ParamTensors, zp: T.Tensor) -> T.Tensor:
    h = T.relu(zp @ pt["pred.w1"] + pt["pred.b1"])
    return h @ pt["pred.w2"] + pt["pred.b2"]


def prototype_logits(pt: ParamTensors, zp: T.Tensor) -> T.Tensor:
    """Cosine similarity of normalized projections against normalized prototypes."""
    zn = T.l2_normalize(zp, axis=-1)
    pn = T.l2_normalize(pt["protos"], axis=-1)
    return zn @ pn.T


def encode(state: ModelState, images: np.ndarray) -> np.ndarray:
    """Plain-array convenience wrapper around the backbone."""
    return backbone(ParamTensors(state, trainable=False), images).data


# ------------------------------------------------------------------ checkpoint

CKPT_MAGIC = b"GSCK"


def save_checkpoint(state: ModelState, path, extra: dict | None = None,
                    arrays: dict | None = None):
    """Named-layout header + little-endian float payload + config echo + seed.

    `arrays` are auxiliary float buffers (teacher params, queue, center)
    appended after the student parameters.
    """
    arrays = arrays or {}
    seg = {"params": [0, [state.params.size]]}
    offset = state.params.size
    chunks = [state.params.astype("<f4").tobytes()]
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype=np.float32)
        seg[name] = [offset, list(a.shape)]
        offset += a.size
        chunks.append(a.astype("<f4").tobytes())
    header = {
        "layout": {k: [off, list(shape)] for k, (off, shape) in state.layout.items()},
        "config": asdict(state.config),
        "seed": state.seed,
        "extra": extra or {},
        "segments": seg,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    Path(path).write_bytes(CKPT_MAGIC + struct.pack("<I", len(hbytes)) + hbytes
                           + b"".join(chunks))


def load_checkpoint(path) -> tuple:
    """Returns (state, extra, arrays)."""
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise EncoderError("bad checkpoint magic")
    hlen = struct.unpack("<I", buf[4:8])[0]
    header = json.loads(buf[8:8 + hlen].decode())
    payload = np.frombuffer(buf[8 + hlen:], dtype="<f4").astype(np.float32)
    seg = header["segments"]
    arrays = {}
    for name, (off, shape) in seg.items():
        size = int(np.prod(shape))
        arrays[name] = payload[off:off + size].reshape(shape).copy()
    params = arrays.pop("params").reshape(-1)
    cfg = EncoderParams(**header["config"])
    layout = {k: (off, tuple(shape)) for k, (off, shape) in header["layout"].items()}
    state = ModelState(params, layout, cfg, header["seed"])
    return state, header.get("extra", {}), arrays
