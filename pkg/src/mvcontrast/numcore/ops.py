"""Differentiable dense ops.

Every op validates shapes, computes the forward value with numpy, and (when
a Tape is active) registers a closure computing input gradients from the
output gradient. Conventions:

  - float64 everywhere; inputs are Arrays, plain Python scalars are allowed
    where noted.
  - image tensors are (B, C, H, W); matrices are (rows, cols).
  - softmax-style ops subtract the row max before exponentiating, so finite
    inputs can never produce NaN/Inf.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateVectorError, ShapeError
from .array import Array
from .tape import record_op

_NORM_EPS = 1e-12


def matmul(a: Array, b: Array) -> Array:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes do not agree: {a.shape} x {b.shape}")
    out = Array(a.data @ b.data)
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd.T, ad.T @ g

    return record_op(out, (a, b), back)


def transpose(a: Array) -> Array:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    out = Array(a.data.T)

    def back(g):
        return (g.T,)

    return record_op(out, (a,), back)


def conv2d(x: Array, kernels: Array, stride: int = 1, padding: int = 0) -> Array:
    """2-D cross-correlation.

    `x` is (C_in, H, W) or (B, C_in, H, W); `kernels` is
    (C_out, C_in, kh, kw). Output spatial size is
    floor((H + 2*padding - kh) / stride) + 1, likewise for width.
    """
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be (C_out, C_in, kh, kw), got {kernels.shape}")
    squeeze = x.ndim == 3
    if not (x.ndim == 4 or squeeze):
        raise ShapeError(f"input must be (C,H,W) or (B,C,H,W), got {x.shape}")
    x4 = x.data[None] if squeeze else x.data
    batch, c_in, h, w = x4.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise ShapeError(f"kernel channels {kernels.shape} do not match input {x.shape}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"kernel {kernels.shape} larger than padded input {x.shape} (padding={padding})"
        )
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1

    xp = np.pad(x4, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x4
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (B, C, Ho, Wo, kh, kw) -> (B*Ho*Wo, C*kh*kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        batch * h_out * w_out, c_in * kh * kw
    )
    kmat = kernels.data.reshape(c_out, c_in * kh * kw)
    out4 = (cols @ kmat.T).reshape(batch, h_out, w_out, c_out).transpose(0, 3, 1, 2)
    out = Array(out4[0] if squeeze else out4)

    def back(g):
        g4 = g[None] if squeeze else g
        gmat = np.ascontiguousarray(g4.transpose(0, 2, 3, 1)).reshape(batch * h_out * w_out, c_out)
        gk = (gmat.T @ cols).reshape(c_out, c_in, kh, kw)
        gwin = (gmat @ kmat).reshape(batch, h_out, w_out, c_in, kh, kw)
        gxp = np.zeros((batch, c_in, h + 2 * padding, w + 2 * padding))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += (
                    gwin[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return (gx[0] if squeeze else gx), gk

    return record_op(out, (x, kernels), back)


def relu(x: Array) -> Array:
    out = Array(np.maximum(x.data, 0.0))
    positive = x.data > 0  # subgradient at exactly 0 is 0

    def back(g):
        return (g * positive,)

    return record_op(out, (x,), back)


def l2_normalize(x: Array) -> Array:
    """Scale a vector, or each row of a matrix, to unit Euclidean norm."""
    if x.ndim == 1:
        norms = np.linalg.norm(x.data)
        if norms <= _NORM_EPS:
            raise DegenerateVectorError(f"cannot normalize vector with norm {norms:g}")
        y = x.data / norms

        def back(g):
            return ((g - y * float(y @ g)) / norms,)

    elif x.ndim == 2:
        norms = np.linalg.norm(x.data, axis=1, keepdims=True)
        bad = np.nonzero(norms[:, 0] <= _NORM_EPS)[0]
        if bad.size:
            raise DegenerateVectorError(f"cannot normalize row {bad[0]} with norm {norms[bad[0], 0]:g}")
        y = x.data / norms

        def back(g):
            return ((g - y * np.sum(y * g, axis=1, keepdims=True)) / norms,)

    else:
        raise ShapeError(f"l2_normalize expects a vector or matrix, got shape {x.shape}")
    out = Array(y)
    return record_op(out, (x,), back)


def softmax_cross_entropy(logits: Array, label: int) -> Array:
    """Negative log softmax probability of `label`, max-subtracted for stability."""
    if logits.ndim != 1:
        raise ShapeError(f"logits must be a vector, got shape {logits.shape}")
    n = logits.shape[0]
    if not 0 <= label < n:
        raise IndexError(f"label {label} out of range for {n} classes")
    m = float(np.max(logits.data))
    lse = m + float(np.log(np.sum(np.exp(logits.data - m))))
    out = Array(lse - float(logits.data[label]))
    p = np.exp(logits.data - lse)

    def back(g):
        d = p.copy()
        d[label] -= 1.0
        return (float(g) * d,)

    return record_op(out, (logits,), back)


def cross_entropy_mean(logits: Array, labels) -> Array:
    """Mean softmax cross-entropy over rows of (B, C) logits."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (B, C), got shape {logits.shape}")
    b, c = logits.shape
    idx = np.asarray(labels, dtype=np.intp)
    if idx.shape != (b,):
        raise ShapeError(f"labels must have shape ({b},), got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise IndexError(f"label out of range for {c} classes")
    m = logits.data.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(logits.data - m), axis=1))
    out = Array(np.mean(lse - logits.data[np.arange(b), idx]))
    p = np.exp(logits.data - lse[:, None])

    def back(g):
        d = p.copy()
        d[np.arange(b), idx] -= 1.0
        return (float(g) * d / b,)

    return record_op(out, (logits,), back)


def masked_row_logsumexp(x: Array, mask: np.ndarray) -> Array:
    """Per-row log(sum(exp)) over entries where `mask` is True.

    Max-subtraction keeps the exponentials bounded; every row must keep at
    least one unmasked entry.
    """
    if x.ndim != 2 or mask.shape != x.shape:
        raise ShapeError(f"mask shape {mask.shape} must match matrix {x.shape}")
    xm = np.where(mask, x.data, -np.inf)
    m = xm.max(axis=1)
    if not np.all(np.isfinite(m)):
        raise ShapeError("masked_row_logsumexp: a row has no unmasked entries")
    out_v = m + np.log(np.sum(np.exp(xm - m[:, None]), axis=1))
    out = Array(out_v)
    p = np.exp(xm - out_v[:, None])  # zero where masked

    def back(g):
        return (g[:, None] * p,)

    return record_op(out, (x,), back)


def take_per_row(x: Array, idx) -> Array:
    """out[i] = x[i, idx[i]]."""
    if x.ndim != 2:
        raise ShapeError(f"take_per_row expects a matrix, got shape {x.shape}")
    b, c = x.shape
    ii = np.asarray(idx, dtype=np.intp)
    if ii.shape != (b,):
        raise ShapeError(f"indices must have shape ({b},), got {ii.shape}")
    if ii.size and (ii.min() < 0 or ii.max() >= c):
        raise IndexError(f"column index out of range for {c} columns")
    out = Array(x.data[np.arange(b), ii])

    def back(g):
        gx = np.zeros((b, c))
        gx[np.arange(b), ii] = g
        return (gx,)

    return record_op(out, (x,), back)


def add(a: Array, b: Array) -> Array:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Array(a.data + b.data)

    def back(g):
        return g, g

    return record_op(out, (a, b), back)


def sub(a: Array, b: Array) -> Array:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    out = Array(a.data - b.data)

    def back(g):
        return g, -g

    return record_op(out, (a, b), back)


def scale(x: Array, c: float) -> Array:
    c = float(c)
    out = Array(x.data * c)

    def back(g):
        return (g * c,)

    return record_op(out, (x,), back)


def add_rowvec(x: Array, v: Array) -> Array:
    """Add a length-n vector to every row of a (B, n) matrix."""
    if x.ndim != 2 or v.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec shapes do not agree: {x.shape} + {v.shape}")
    out = Array(x.data + v.data)

    def back(g):
        return g, g.sum(axis=0)

    return record_op(out, (x, v), back)


def add_chanvec(x: Array, v: Array) -> Array:
    """Add a per-channel vector to a (B, C, H, W) tensor."""
    if x.ndim != 4 or v.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_chanvec shapes do not agree: {x.shape} + {v.shape}")
    out = Array(x.data + v.data[None, :, None, None])

    def back(g):
        return g, g.sum(axis=(0, 2, 3))

    return record_op(out, (x, v), back)


def channel_affine(x: Array, mul: Array, shift: Array) -> Array:
    """Per-channel x * mul + shift over a (B, C, H, W) tensor."""
    if x.ndim != 4 or mul.shape != (x.shape[1],) or shift.shape != (x.shape[1],):
        raise ShapeError(
            f"channel_affine shapes do not agree: {x.shape}, {mul.shape}, {shift.shape}"
        )
    md = mul.data[None, :, None, None]
    out = Array(x.data * md + shift.data[None, :, None, None])
    xd = x.data

    def back(g):
        return g * md, np.sum(g * xd, axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return record_op(out, (x, mul, shift), back)


def batch_norm(x: Array, gamma: Array, beta: Array, eps: float = 1e-5) -> Array:
    """Per-channel batch standardization with learned scale and shift.

    Normalizes over the batch and spatial axes of a (B, C, H, W) tensor
    using biased batch statistics. Output depends on the whole batch, which
    breaks row independence; the default backbone leaves this off.
    """
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batch_norm shapes do not agree: {x.shape}, {gamma.shape}, {beta.shape}")
    axes = (0, 2, 3)
    n = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=axes)
    var = x.data.var(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xc = x.data - mean[None, :, None, None]
    xhat = xc * inv_std[None, :, None, None]
    out = Array(xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None])

    def back(g):
        gd = gamma.data[None, :, None, None]
        istd = inv_std[None, :, None, None]
        dxhat = g * gd
        s1 = dxhat.sum(axis=axes)[None, :, None, None]
        s2 = np.sum(dxhat * xhat, axis=axes)[None, :, None, None]
        dx = istd / n * (n * dxhat - s1 - xhat * s2)
        return dx, np.sum(g * xhat, axis=axes), g.sum(axis=axes)

    return record_op(out, (x, gamma, beta), back)


def batch_channel_stats(x: Array) -> tuple[np.ndarray, np.ndarray]:
    """Biased per-channel mean/var over batch and spatial axes (not taped)."""
    if x.ndim != 4:
        raise ShapeError(f"expected (B, C, H, W), got {x.shape}")
    return x.data.mean(axis=(0, 2, 3)), x.data.var(axis=(0, 2, 3))


def mean_pool_hw(x: Array) -> Array:
    """Global mean pool (B, C, H, W) -> (B, C)."""
    if x.ndim != 4:
        raise ShapeError(f"mean_pool_hw expects (B, C, H, W), got {x.shape}")
    b, c, h, w = x.shape
    out = Array(x.data.mean(axis=(2, 3)))

    def back(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (b, c, h, w)).copy(),)

    return record_op(out, (x,), back)


def reshape(x: Array, shape: tuple[int, ...]) -> Array:
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    orig = x.shape
    out = Array(x.data.reshape(shape))

    def back(g):
        return (g.reshape(orig),)

    return record_op(out, (x,), back)


def sum_all(x: Array) -> Array:
    out = Array(np.sum(x.data))
    shape = x.shape

    def back(g):
        return (np.broadcast_to(g, shape).copy() if shape else g.copy(),)

    return record_op(out, (x,), back)


def mean_all(x: Array) -> Array:
    return scale(sum_all(x), 1.0 / x.size)
