"""Downstream evaluation: PCA reduction, linear probe, macro-F1.

The probe is a multinomial logistic regression trained by full-batch
gradient descent; it stands in for the original protocol's SVM and is
named as a substitution in every report.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np


class EvalError(Exception):
    pass


# ------------------------------------------------------------------------ PCA


@dataclass
class PcaModel:
    mean: np.ndarray          # (D,)
    components: np.ndarray    # (D, d), orthonormal columns
    explained: np.ndarray     # (d,) variance shares, non-increasing


def pca_fit(latents: np.ndarray, d: int) -> PcaModel:
    x = np.asarray(latents, dtype=np.float64)
    n, dim = x.shape
    if n <= 1:
        raise EvalError("need more than one sample")
    if d > dim:
        raise EvalError(f"cannot reduce {dim} dims to {d}")
    if n <= d:
        raise EvalError("need n > d samples")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d]
    comps = evecs[:, order]
    ev = np.maximum(evals[order], 0.0)
    total = max(evals.clip(min=0).sum(), 1e-12)
    return PcaModel(mean=mean, components=comps, explained=ev / total)


def pca_apply(model: PcaModel, latents: np.ndarray) -> np.ndarray:
    x = np.asarray(latents, dtype=np.float64)
    return (x - model.mean) @ model.components


# ---------------------------------------------------------------------- probe


@dataclass
class ProbeModel:
    weights: np.ndarray       # (d, C)
    bias: np.ndarray          # (C,)
    feat_mean: np.ndarray
    feat_std: np.ndarray
    meta: dict = field(default_factory=dict)

    def predict(self, latents: np.ndarray) -> np.ndarray:
        x = (np.asarray(latents, dtype=np.float64) - self.feat_mean) / self.feat_std
        return (x @ self.weights + self.bias).argmax(axis=1)


def stratified_split(labels: np.ndarray, train_frac: float, seed: int):
    """Per-class shuffled split; returns (train_idx, eval_idx)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng([int(seed), 0x5B])
    train, evl = [], []
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        idx = rng.permutation(idx)
        k = max(1, int(round(train_frac * len(idx))))
        k = min(k, len(idx) - 1) if len(idx) > 1 else k
        train.extend(idx[:k])
        evl.extend(idx[k:])
    return np.sort(np.array(train)), np.sort(np.array(evl))


def probe_train(latents: np.ndarray, labels: np.ndarray, split_seed: int = 0,
                epochs: int = 300, lr: float = 0.5, l2: float = 1e-3) -> ProbeModel:
    """Multinomial logistic regression by full-batch gradient descent."""
    x = np.asarray(latents, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise EvalError("probe needs at least 2 classes")
    counts = np.bincount(y)
    if np.any(counts[counts > 0] < 2):
        raise EvalError("each present class needs at least 2 examples")
    c = int(y.max()) + 1
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), 1e-8)
    xs = (x - mean) / std
    n, d = xs.shape
    onehot = np.eye(c)[y]
    w = np.zeros((d, c))
    b = np.zeros(c)
    for _ in range(epochs):
        logits = xs @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        p = e / e.sum(axis=1, keepdims=True)
        gw = xs.T @ (p - onehot) / n + l2 * w
        gb = (p - onehot).mean(axis=0)
        w -= lr * gw
        b -= lr * gb
    return ProbeModel(weights=w, bias=b, feat_mean=mean, feat_std=std,
                      meta={"epochs": epochs, "lr": lr, "l2": l2,
                            "split_seed": int(split_seed),
                            "classifier": "multinomial linear probe (SVM substitute)"})


# --------------------------------------------------------------------- metrics


def confusion(pred: np.ndarray, ref: np.ndarray, n_classes: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64)
    ref = np.asarray(ref, dtype=np.int64)
    if pred.shape != ref.shape:
        raise EvalError("pred/ref length mismatch")
    if pred.min(initial=0) < 0 or ref.min(initial=0) < 0 \
            or pred.max(initial=0) >= n_classes or ref.max(initial=0) >= n_classes:
        raise EvalError("label out of range")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (ref, pred), 1)
    return cm


def per_class_prf(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0).astype(np.float64)
    ref_tot = cm.sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(ref_tot > 0, tp / ref_tot, 0.0)
        f1 = np.where(precision + recall > 0,
                      2 * precision * recall / (precision + recall), 0.0)
    return precision, recall, f1


def macro_f1(pred: np.ndarray, ref: np.ndarray, n_classes: int) -> float:
    """Unweighted mean of per-class F1; absent classes count as 0."""
    cm = confusion(pred, ref, n_classes)
    _, _, f1 = per_class_prf(cm)
    absent = np.nonzero(cm.sum(axis=1) == 0)[0]
    if absent.size:
        warnings.warn(f"classes {absent.tolist()} absent from reference; "
                      "they contribute F1=0 to the macro average")
    return float(f1.mean())


@dataclass
class EvalReport:
    macro_f1: float
    per_class_f1: list
    per_class_precision: list
    per_class_recall: list
    confusion: list               # C×C nested lists
    n_train: int
    n_eval: int
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def evaluate_latents(latents: np.ndarray, labels: np.ndarray, n_classes: int,
                     split_seed: int = 0, train_frac: float = 0.6,
                     pca_dim: Optional[int] = None,
                     config: Optional[dict] = None) -> EvalReport:
    """Full protocol: optional PCA, stratified split, probe, macro-F1."""
    x = np.asarray(latents, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if pca_dim is not None and pca_dim < x.shape[1]:
        model = pca_fit(x, pca_dim)
        x = pca_apply(model, x)
    tr, ev = stratified_split(y, train_frac, split_seed)
    probe = probe_train(x[tr], y[tr], split_seed=split_seed)
    pred = probe.predict(x[ev])
    cm = confusion(pred, y[ev], n_classes)
    precision, recall, f1 = per_class_prf(cm)
    cfg = dict(config or {})
    cfg.setdefault("classifier", "multinomial linear probe (SVM substitute)")
    cfg["split_seed"] = int(split_seed)
    cfg["train_frac"] = train_frac
    cfg["pca_dim"] = pca_dim
    return EvalReport(
        macro_f1=float(f1.mean()),
        per_class_f1=f1.tolist(),
        per_class_precision=precision.tolist(),
        per_class_recall=recall.tolist(),
        confusion=cm.tolist(),
        n_train=int(tr.size),
        n_eval=int(ev.size),
        config=cfg,
    )


def compare_runs(report_a: EvalReport, report_b: EvalReport) -> list:
    """Per-class and macro deltas (absolute and relative, (b-a)/a)."""
    if report_a.config.get("split_seed") != report_b.config.get("split_seed") \
            or report_a.n_eval != report_b.n_eval:
        raise EvalError("reports come from mismatched splits")
    rows = []
    for k, (fa, fb) in enumerate(zip(report_a.per_class_f1, report_b.per_class_f1)):
        rel = (fb - fa) / fa if fa > 0 else float("nan")
        rows.append({"row": f"class_{k}", "a": fa, "b": fb,
                     "delta": fb - fa, "relative": rel})
    ma, mb = report_a.macro_f1, report_b.macro_f1
    rows.append({"row": "macro", "a": ma, "b": mb, "delta": mb - ma,
                 "relative": (mb - ma) / ma if ma > 0 else float("nan")})
    return rows
