"""The six SSL losses and their shared machinery.

All losses take autodiff tensors for branches that receive gradient and
plain arrays for branches that must not (teacher outputs, Sinkhorn
targets, queue entries), so the no-gradient contracts hold by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .encoder import ModelState


class ObjectiveError(Exception):
    pass


@dataclass
class LossConfig:
    tau: float = 0.2                 # NT-Xent / MoCo temperature
    tau_s: float = 0.1               # DINO student temperature
    tau_t: float = 0.04              # DINO teacher temperature (sharper)
    momentum: float = 0.99           # EMA coefficient m
    queue_capacity: int = 1024
    sinkhorn_eps: float = 0.05
    sinkhorn_iters: int = 3
    n_clusters: int = 12             # k-means K for DeepCluster
    center_momentum: float = 0.9
    cluster_every_step: bool = False

    def validate(self):
        for name in ("tau", "tau_s", "tau_t", "sinkhorn_eps"):
            if getattr(self, name) <= 0:
                raise ObjectiveError(f"{name} must be positive")
        if not (0 <= self.momentum < 1):
            raise ObjectiveError("momentum must be in [0, 1)")
        if self.tau_t >= self.tau_s:
            raise ObjectiveError("teacher temperature must be below student's")


def cosine_sim(a, b) -> float:
    a = np.asarray(a.data if isinstance(a, T.Tensor) else a, dtype=np.float64).ravel()
    b = np.asarray(b.data if isinstance(b, T.Tensor) else b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ObjectiveError("cosine similarity of zero vector")
    return float(a @ b / (na * nb))


def similarity_column_order(two_n: int) -> np.ndarray:
    """Column index map of the reordered similarity matrix.

    Row i: positive partner (i+N) mod 2N first, then the remaining
    indices j != i in their original order.
    """
    if two_n % 2:
        raise ObjectiveError("batch must hold an even number of views")
    n = two_n // 2
    cols = np.empty((two_n, two_n - 1), dtype=np.int64)
    for i in range(two_n):
        pos = (i + n) % two_n
        rest = [j for j in range(two_n) if j != i and j != pos]
        cols[i] = [pos] + rest
    return cols


def build_similarity_matrix(z: T.Tensor) -> T.Tensor:
    """Fig-style 2N×(2N−1) cosine matrix: positive at column 0."""
    two_n = z.shape[0]
    cols = similarity_column_order(two_n)
    zn = T.l2_normalize(z, axis=-1)
    sim = zn @ zn.T
    rows = np.repeat(np.arange(two_n)[:, None], two_n - 1, axis=1)
    return T.gather2d(sim, rows, cols)


def _neg_log_softmax_col0(logits: T.Tensor) -> T.Tensor:
    """Mean over rows of −log softmax(logits)[.,0], computed stably."""
    shift = logits - T.Tensor(logits.data.max(axis=1, keepdims=True))
    lse = T.log(T.exp(shift).sum(axis=1))
    return (lse - shift[:, 0]).mean()


def _log_softmax(logits: T.Tensor) -> T.Tensor:
    """Row-wise log softmax via a constant max shift (stable for peaked rows)."""
    shift = logits - T.Tensor(logits.data.max(axis=1, keepdims=True))
    lse = T.log(T.exp(shift).sum(axis=1, keepdims=True))
    return shift - lse


def nt_xent(m: T.Tensor, tau: float) -> T.Tensor:
    """Contrastive cross-entropy over a reordered similarity matrix."""
    if tau <= 0:
        raise ObjectiveError("tau must be positive")
    return _neg_log_softmax_col0(m * (1.0 / tau))


def collapse_loss_value(n: int) -> float:
    """NT-Xent value when every latent is identical."""
    return float(np.log(2 * n - 1))


def _batch_cosine(a: T.Tensor, b: T.Tensor) -> T.Tensor:
    an = T.l2_normalize(a, axis=-1)
    bn = T.l2_normalize(b, axis=-1)
    return (an * bn).sum(axis=-1).mean()


def simsiam_loss(p1: T.Tensor, z1: T.Tensor, p2: T.Tensor, z2: T.Tensor) -> T.Tensor:
    """Negative symmetric cosine; the z branches are gradient-stopped."""
    sg1 = T.stop_gradient(z1)
    sg2 = T.stop_gradient(z2)
    return (_batch_cosine(p1, sg2) + _batch_cosine(p2, sg1)) * (-0.5)


# ------------------------------------------------------------------ EMA / MoCo


@dataclass
class TeacherState:
    model: ModelState
    center: Optional[np.ndarray] = None   # DINO centering vector

    @classmethod
    def from_student(cls, student: ModelState) -> "TeacherState":
        k = student.config.n_prototypes
        return cls(model=student.copy(), center=np.zeros(k, dtype=np.float32))


def ema_update(teacher: TeacherState, student: ModelState, m: float):
    if not (0 <= m < 1):
        raise ObjectiveError("momentum must be in [0, 1)")
    if teacher.model.params.shape != student.params.shape:
        raise ObjectiveError("teacher/student layouts differ")
    teacher.model.params *= m
    teacher.model.params += (1.0 - m) * student.params


class MemoryQueue:
    """FIFO ring buffer of l2-normalized keys; never carries gradient."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = int(capacity)
        self.keys = np.zeros((self.capacity, dim), dtype=np.float32)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def view(self) -> np.ndarray:
        return self.keys[:self.size]

    def enqueue(self, batch: np.ndarray):
        batch = np.asarray(batch, dtype=np.float32)
        norms = np.linalg.norm(batch, axis=1, keepdims=True)
        batch = batch / np.maximum(norms, 1e-12)
        for row in batch:
            self.keys[self.cursor] = row
            self.cursor = (self.cursor + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def state_dict(self) -> dict:
        return {"keys": self.keys.copy(), "size": self.size, "cursor": self.cursor}

    def load_state_dict(self, d: dict):
        self.keys = np.asarray(d["keys"], dtype=np.float32).copy()
        self.size = int(d["size"])
        self.cursor = int(d["cursor"])


def moco_loss(q: T.Tensor, k_plus: np.ndarray, queue: MemoryQueue, tau: float,
              enqueue: bool = True) -> T.Tensor:
    """InfoNCE of student queries against the teacher key and queued negatives.

    Keys are enqueued after the loss, so a batch never contrasts against
    its own keys.
    """
    if tau <= 0:
        raise ObjectiveError("tau must be positive")
    k_plus = np.asarray(k_plus, dtype=np.float32)
    kn = k_plus / np.maximum(np.linalg.norm(k_plus, axis=1, keepdims=True), 1e-12)
    qn = T.l2_normalize(q, axis=-1)
    l_pos = (qn * T.Tensor(kn)).sum(axis=1, keepdims=True)
    if len(queue) > 0:
        l_neg = qn @ T.Tensor(queue.view().T)
        logits = T.concat([l_pos, l_neg], axis=1)
    else:
        logits = l_pos
    loss = _neg_log_softmax_col0(logits * (1.0 / tau))
    if enqueue:
        queue.enqueue(k_plus)
    return loss


# ------------------------------------------------------- clustering machinery


def sinkhorn(scores: np.ndarray, eps: float, iters: int) -> np.ndarray:
    """Balanced soft assignment with uniform marginals.

    Rows sum to 1 exactly on output; column sums approach B/K with
    iterations.
    """
    if eps <= 0 or iters < 1:
        raise ObjectiveError("need eps > 0 and iters >= 1")
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ObjectiveError("non-finite scores")
    b, k = s.shape
    p = np.exp((s - s.max()) / eps)
    for _ in range(iters):
        p *= (b / k) / p.sum(axis=0, keepdims=True)   # column marginal B/K
        p /= p.sum(axis=1, keepdims=True)             # row marginal 1
    return p


def swav_loss(globals_logits: list, all_logits: list, cfg: LossConfig) -> T.Tensor:
    """Swapped prediction: Sinkhorn targets from each global view, predicted
    by every other view's softmax. Targets carry no gradient."""
    if len(globals_logits) < 2:
        raise ObjectiveError("swav needs at least 2 global views")
    b = globals_logits[0].shape[0]
    total = None
    for v, gl in enumerate(globals_logits):
        q = sinkhorn(gl.data, cfg.sinkhorn_eps, cfg.sinkhorn_iters)   # constant
        qt = T.Tensor(q)
        for vp, logits in enumerate(all_logits):
            if vp == v:
                continue
            logp = _log_softmax(logits * (1.0 / cfg.tau))
            term = -(qt * logp).sum()
            total = term if total is None else total + term
    return total * (1.0 / (2 * b))


def kmeans(latents: np.ndarray, k: int, seed: int, max_iters: int = 100,
           return_history: bool = False):
    """Lloyd's algorithm with k-means++ seeding; empty clusters are reseeded
    to the point farthest from its assigned centroid."""
    x = np.asarray(latents, dtype=np.float64)
    n = x.shape[0]
    if n < k:
        raise ObjectiveError(f"kmeans needs n >= k ({n} < {k})")
    rng = np.random.default_rng([int(seed), 0xC1])

    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centroids[c] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((x - centroids[c]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=np.int64)
    history = []
    for _ in range(max_iters):
        dist = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        history.append(float(dist[np.arange(n), new_labels].sum()))
        for c in range(k):
            mask = new_labels == c
            if mask.any():
                centroids[c] = x[mask].mean(axis=0)
            else:
                worst = dist[np.arange(n), new_labels].argmax()
                centroids[c] = x[worst]
                new_labels[worst] = c
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    if return_history:
        return labels, centroids.astype(np.float32), history
    return labels, centroids.astype(np.float32)


def deepcluster_loss(probs: T.Tensor, labels: np.ndarray) -> T.Tensor:
    """Cross-entropy against k-means pseudolabels."""
    labels = np.asarray(labels, dtype=np.int64)
    b, k = probs.shape
    if labels.min() < 0 or labels.max() >= k:
        raise ObjectiveError("pseudolabel out of range")
    picked = T.gather2d(probs, np.arange(b), labels)
    return -T.log(picked).mean()


def dino_loss(student_logits: list, teacher_logits: list, teacher: TeacherState,
              cfg: LossConfig, update_center: bool = True) -> T.Tensor:
    """Self-distillation across views with teacher centering and sharpening.

    Teacher targets are plain arrays (no gradient); same-view terms are
    skipped; the center then tracks the batch mean of teacher logits.
    """
    cfg.validate()
    n_s, n_t = len(student_logits), len(teacher_logits)
    c = teacher.center
    total = None
    for vt, tl in enumerate(teacher_logits):
        td = np.asarray(tl.data if isinstance(tl, T.Tensor) else tl, dtype=np.float64)
        shifted = (td - c) / cfg.tau_t
        shifted -= shifted.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        pt = T.Tensor(e / e.sum(axis=1, keepdims=True))
        for vs, sl in enumerate(student_logits):
            if vs == vt:
                continue
            logp = _log_softmax(sl * (1.0 / cfg.tau_s))
            term = -(pt * logp).sum(axis=1).mean()
            total = term if total is None else total + term
    if total is None:
        raise ObjectiveError("no student/teacher view pairs after skipping same-view terms")
    loss = total * (1.0 / (n_s * n_t))
    if update_center:
        stacked = np.concatenate([
            np.asarray(tl.data if isinstance(tl, T.Tensor) else tl)
            for tl in teacher_logits], axis=0)
        batch_mean = stacked.mean(axis=0).astype(np.float32)
        teacher.center = cfg.center_momentum * c + (1 - cfg.center_momentum) * batch_mean
    return loss
