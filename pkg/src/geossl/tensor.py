"""Minimal reverse-mode autodiff over numpy arrays.

Define-by-run: every op records its inputs and a backward closure on the
output tensor; ``backward()`` walks the tape in reverse topological order.
Data is float32; the finite-difference harness upcasts to float64.
"""

from __future__ import annotations

import numpy as np


class TensorError(Exception):
    pass


class NonFiniteError(TensorError):
    """A forward op produced NaN or Inf."""


_DTYPE = np.float32


class precision:
    """Context manager switching the working dtype (float32 default)."""

    def __init__(self, dtype):
        self.dtype = dtype

    def __enter__(self):
        global _DTYPE
        self._saved = _DTYPE
        _DTYPE = self.dtype

    def __exit__(self, *exc):
        global _DTYPE
        _DTYPE = self._saved


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=_DTYPE)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = _as_array(data)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("tensor holds non-finite values")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------ utils

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        if self.data.size != 1:
            raise TensorError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen = set()

        def visit(t: Tensor):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        for t in topo:
            t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def _accumulate(self, g: np.ndarray):
        g = g.astype(self.data.dtype, copy=False)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    # ------------------------------------------------------------- arithmetic

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return tslice(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    if req:
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def stop_gradient(t: Tensor) -> Tensor:
    """Block backprop through `t`; forward value unchanged."""
    return Tensor(t.data)


# ---------------------------------------------------------------- elementwise


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), bw)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), bw)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), bw)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    if np.any(b.data == 0):
        raise TensorError("division by zero")
    out_data = a.data / b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data ** 2), b.shape))

    return _make(out_data, (a, b), bw)


def power(a, p: float):
    a = _wrap(a)
    out_data = a.data ** p

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1))

    return _make(out_data, (a,), bw)


def relu(a):
    a = _wrap(a)
    out_data = np.maximum(a.data, 0)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0))

    return _make(out_data, (a,), bw)


def exp(a):
    a = _wrap(a)
    out_data = np.exp(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return _make(out_data, (a,), bw)


def log(a):
    a = _wrap(a)
    if np.any(a.data <= 0):
        raise TensorError("log of non-positive value")
    out_data = np.log(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(out_data, (a,), bw)


# ----------------------------------------------------------------- reductions


def tsum(a, axis=None, keepdims=False):
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            gg = g
            if not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accumulate(np.broadcast_to(gg, a.shape))

    return _make(out_data, (a,), bw)


def tmean(a, axis=None, keepdims=False):
    a = _wrap(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


# -------------------------------------------------------------- shape / index


def reshape(a, shape):
    a = _wrap(a)
    out_data = a.data.reshape(shape)
    old = a.shape

    def bw(g):
        if a.requires_grad:
            a._accumulate(g.reshape(old))

    return _make(out_data, (a,), bw)


def transpose(a, axes=None):
    a = _wrap(a)
    out_data = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def bw(g):
        if a.requires_grad:
            a._accumulate(np.transpose(g, inv))

    return _make(out_data, (a,), bw)


def tslice(a, idx):
    a = _wrap(a)
    out_data = a.data[idx]

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full)

    return _make(out_data, (a,), bw)


def gather2d(a, rows: np.ndarray, cols: np.ndarray):
    """Pick a[rows[k], cols[k]] elementwise; rows/cols broadcast together."""
    a = _wrap(a)
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    out_data = a.data[rows, cols]

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (rows, cols), g)
            a._accumulate(full)

    return _make(out_data, (a,), bw)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(out_data, tuple(tensors), bw)


# ------------------------------------------------------------- linear algebra


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    out_data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b._accumulate(a.data.swapaxes(-1, -2) @ g)

    return _make(out_data, (a, b), bw)


def softmax(a, axis=-1):
    """Max-subtracted softmax along `axis`."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if a.requires_grad:
            s = out_data
            dot = (g * s).sum(axis=axis, keepdims=True)
            a._accumulate(s * (g - dot))

    return _make(out_data, (a,), bw)


def l2_normalize(a, axis=-1, eps=1e-12):
    a = _wrap(a)
    norm = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    out_data = a.data / norm

    def bw(g):
        if a.requires_grad:
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate((g - out_data * dot) / norm)

    return _make(out_data, (a,), bw)


# -------------------------------------------------------------- convolutional


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0):
    """NHWC conv. w: (KH, KW, Cin, Cout), b: (Cout,)."""
    x, w = _wrap(x), _wrap(w)
    if b is not None:
        b = _wrap(b)
    B, H, W_, C = x.shape
    KH, KW, Cin, Cout = w.shape
    if Cin != C:
        raise TensorError(f"conv2d channel mismatch: input {C}, kernel {Cin}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    OH = (H + 2 * padding - KH) // stride + 1
    OW = (W_ + 2 * padding - KW) // stride + 1
    if OH <= 0 or OW <= 0:
        raise TensorError("conv2d output would be empty")
    out_data = np.zeros((B, OH, OW, Cout), dtype=xp.dtype)
    for kh in range(KH):
        for kw in range(KW):
            xs = xp[:, kh:kh + stride * OH:stride, kw:kw + stride * OW:stride, :]
            out_data += xs @ w.data[kh, kw]
    if b is not None:
        out_data += b.data

    def bw(g):
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 1, 2)))
        need_x = x.requires_grad
        need_w = w.requires_grad
        if not (need_x or need_w):
            return
        dxp = np.zeros_like(xp) if need_x else None
        dw = np.zeros_like(w.data) if need_w else None
        for kh in range(KH):
            for kw in range(KW):
                xs = xp[:, kh:kh + stride * OH:stride, kw:kw + stride * OW:stride, :]
                if need_w:
                    dw[kh, kw] = np.einsum("bijc,bijf->cf", xs, g)
                if need_x:
                    dxp[:, kh:kh + stride * OH:stride, kw:kw + stride * OW:stride, :] += g @ w.data[kh, kw].T
        if need_w:
            w._accumulate(dw)
        if need_x:
            if padding:
                dxp = dxp[:, padding:-padding, padding:-padding, :]
            x._accumulate(dxp)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out_data, parents, bw)


def avg_pool2d(x, size: int = 2):
    """Non-overlapping average pool; odd trailing rows/cols are dropped."""
    x = _wrap(x)
    B, H, W_, C = x.shape
    OH, OW = H // size, W_ // size
    if OH < 1 or OW < 1:
        raise TensorError("avg_pool2d input smaller than window")
    xt = x.data[:, :OH * size, :OW * size, :]
    out_data = xt.reshape(B, OH, size, OW, size, C).mean(axis=(2, 4))

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            gg = np.repeat(np.repeat(g, size, axis=1), size, axis=2) / (size * size)
            full[:, :OH * size, :OW * size, :] = gg
            x._accumulate(full)

    return _make(out_data, (x,), bw)


# ---------------------------------------------------------------- verification


def finite_diff_check(f, x: Tensor, eps: float = 1e-3) -> float:
    """Max relative error between analytic grad of f at x and central differences.

    Denominator is max(|analytic|, |numeric|, 1e-8) elementwise.
    """
    if eps <= 0:
        raise TensorError("eps must be positive")
    with precision(np.float64):
        return _finite_diff_check64(f, x, eps)


def _finite_diff_check64(f, x: Tensor, eps: float) -> float:
    xt = Tensor(x.data.copy(), requires_grad=True)
    loss = f(xt)
    loss.backward()
    analytic = np.zeros_like(x.data, dtype=np.float64) if xt.grad is None \
        else xt.grad.astype(np.float64)

    base = x.data.astype(np.float64)
    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        fp = f(Tensor(base)).item()
        flat[k] = orig - eps
        fm = f(Tensor(base)).item()
        flat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError("non-finite f evaluation in finite_diff_check")
        num_flat[k] = (fp - fm) / (2 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
