"""Dense NCHW tensor kernels: convolution variants, pooling, batchnorm,
dense layers, and the analytical multiply-accumulate cost model.

All arrays are float64. Convolutions are stride-1 with zero padding;
"same" padding is the default so spatial extents are preserved.
Forward/backward pairs are pure functions; an optional MacCounter can be
threaded through the conv kernels to measure actual multiply-accumulate
counts against the analytic model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor/kernel shapes are incompatible."""


def _as4d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D (N,C,H,W) tensor, got shape {x.shape}")
    return x


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


@dataclass
class ConvKernel:
    """Convolution weights tagged with their variant.

    weights shapes: standard (Y, X, k, k); depthwise (X, k, k);
    pointwise (Y, X, 1, 1).
    """

    kind: str  # standard | depthwise | pointwise
    weights: np.ndarray
    stride: int = 1
    padding: int | None = None  # None = "same" at stride 1

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.kind not in ("standard", "depthwise", "pointwise"):
            raise ShapeError(f"unknown kernel kind {self.kind!r}")
        if self.stride != 1:
            raise ShapeError("only stride 1 is supported")
        if self.kind == "depthwise":
            if self.weights.ndim != 3 or self.weights.shape[1] != self.weights.shape[2]:
                raise ShapeError(f"depthwise weights must be (X,k,k), got {self.weights.shape}")
        else:
            if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
                raise ShapeError(f"{self.kind} weights must be (Y,X,k,k), got {self.weights.shape}")
            if self.kind == "pointwise" and self.weights.shape[2] != 1:
                raise ShapeError(f"pointwise kernels must be 1x1, got {self.weights.shape}")

    @property
    def ksize(self):
        return self.weights.shape[-1]

    def pad(self):
        if self.padding is not None:
            return self.padding
        return (self.ksize - 1) // 2  # same padding for odd k


@dataclass
class CostReport:
    """Multiply-accumulate count with an optional per-stage breakdown."""

    mult_adds: int
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.breakdown and sum(self.breakdown.values()) != self.mult_adds:
            raise ValueError("breakdown does not sum to total")


class MacCounter:
    """Accumulates multiply-accumulate counts reported by the conv kernels."""

    def __init__(self):
        self.total = 0
        self.breakdown = {}

    def add(self, stage, count):
        self.total += count
        self.breakdown[stage] = self.breakdown.get(stage, 0) + count

    def report(self):
        return CostReport(mult_adds=self.total, breakdown=dict(self.breakdown))


def _pad2d(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def standard_conv2d(x, kernel, counter=None):
    """Standard convolution: out[n,y,h,w] = sum_{p,q,x} K[y,x,p,q] * F[n,x,h+p-pad,w+q-pad]."""
    x = _as4d(x)
    if kernel.kind != "standard":
        raise ShapeError(f"standard_conv2d got {kernel.kind} kernel")
    w = kernel.weights
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input channels {x.shape[1]} != kernel input channels {w.shape[1]} "
                         f"(input {x.shape}, kernel {w.shape})")
    k, p = kernel.ksize, kernel.pad()
    xp = _pad2d(x, p)
    n, _, hp, wp = xp.shape
    ho, wo = hp - k + 1, wp - k + 1
    out = np.zeros((n, w.shape[0], ho * wo))
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + ho, j:j + wo].reshape(n, -1, ho * wo)
            out += np.matmul(w[:, :, i, j], patch)
    if counter is not None:
        counter.add("standard", n * k * k * w.shape[1] * w.shape[0] * ho * wo)
    return out.reshape(n, w.shape[0], ho, wo)


def standard_conv2d_backward(x, kernel, dout):
    """Returns (dx, dweights) for standard_conv2d."""
    x = _as4d(x)
    w = kernel.weights
    k, p = kernel.ksize, kernel.pad()
    xp = _pad2d(x, p)
    n, _, hp, wp = xp.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    dflat = dout.reshape(n, -1, ho * wo)
    for i in range(k):
        for j in range(k):
            patch = xp[:, :, i:i + ho, j:j + wo].reshape(n, -1, ho * wo)
            dw[:, :, i, j] = np.matmul(dflat, patch.transpose(0, 2, 1)).sum(axis=0)
            dxp[:, :, i:i + ho, j:j + wo] += np.matmul(
                w[:, :, i, j].T, dflat).reshape(n, -1, ho, wo)
    dx = dxp if p == 0 else dxp[:, :, p:-p, p:-p]
    return dx, dw


def depthwise_conv2d(x, kernel, counter=None):
    """Per-channel spatial convolution: the x-th filter applies to the x-th channel."""
    x = _as4d(x)
    if kernel.kind != "depthwise":
        raise ShapeError(f"depthwise_conv2d got {kernel.kind} kernel")
    w = kernel.weights
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"input channels {x.shape[1]} != depthwise filters {w.shape[0]} "
                         f"(input {x.shape}, kernel {w.shape})")
    k, p = kernel.ksize, kernel.pad()
    xp = _pad2d(x, p)
    n, c, hp, wp = xp.shape
    ho, wo = hp - k + 1, wp - k + 1
    out = np.zeros((n, c, ho, wo))
    for i in range(k):
        for j in range(k):
            out += xp[:, :, i:i + ho, j:j + wo] * w[None, :, i, j, None, None]
    if counter is not None:
        counter.add("depthwise", n * k * k * c * ho * wo)
    return out


def depthwise_conv2d_backward(x, kernel, dout):
    x = _as4d(x)
    w = kernel.weights
    k, p = kernel.ksize, kernel.pad()
    xp = _pad2d(x, p)
    ho, wo = dout.shape[2], dout.shape[3]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for i in range(k):
        for j in range(k):
            dw[:, i, j] = np.einsum("nchw,nchw->c", dout, xp[:, :, i:i + ho, j:j + wo])
            dxp[:, :, i:i + ho, j:j + wo] += dout * w[None, :, i, j, None, None]
    dx = dxp if p == 0 else dxp[:, :, p:-p, p:-p]
    return dx, dw


def pointwise_conv2d(x, kernel, counter=None):
    """1x1 convolution: a per-pixel linear map across channels."""
    x = _as4d(x)
    if kernel.kind != "pointwise":
        raise ShapeError(f"pointwise_conv2d got {kernel.kind} kernel")
    w = kernel.weights
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input channels {x.shape[1]} != kernel input channels {w.shape[1]} "
                         f"(input {x.shape}, kernel {w.shape})")
    n, _, h, wd = x.shape
    out = np.matmul(w[:, :, 0, 0], x.reshape(n, -1, h * wd)).reshape(n, -1, h, wd)
    if counter is not None:
        counter.add("pointwise", n * w.shape[1] * w.shape[0] * h * wd)
    return out


def pointwise_conv2d_backward(x, kernel, dout):
    w = kernel.weights[:, :, 0, 0]
    n, _, h, wd = x.shape
    dflat = dout.reshape(n, -1, h * wd)
    xflat = x.reshape(n, -1, h * wd)
    dw = np.matmul(dflat, xflat.transpose(0, 2, 1)).sum(axis=0)[:, :, None, None]
    dx = np.matmul(w.T, dflat).reshape(x.shape)
    return dx, dw


def maxpool2d(x):
    """2x2 stride-2 max pooling; spatial extents must be even."""
    x = _as4d(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial extents, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, h // 2, w // 2, 4).max(axis=-1)


def maxpool2d_backward(x, dout):
    """Routes gradient to the argmax of each window; ties go to the lowest
    linear (row-major) index within the window."""
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = win.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)  # first occurrence = lowest linear index
    dflat = np.zeros_like(flat)
    np.put_along_axis(dflat, idx[..., None], dout[..., None], axis=-1)
    dwin = dflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dwin.reshape(n, c, h, w)


BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def batchnorm2d(x, gamma, beta, running_mean, running_var, train, eps=BN_EPS,
                momentum=BN_MOMENTUM):
    """Per-channel batch normalization.

    Train mode normalizes with batch statistics and updates the running
    stats in place (running = momentum*running + (1-momentum)*batch).
    Eval mode normalizes with the running stats.

    Returns (out, cache) where cache feeds batchnorm2d_backward.
    """
    x = _as4d(x)
    c = x.shape[1]
    if len(gamma) != c or len(beta) != c:
        raise ShapeError(f"gamma/beta length must equal channel count {c}")
    if x.shape[0] == 0:
        raise ShapeError("zero batch")
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    cache = (xhat, inv_std, gamma, train)
    return out, cache


def batchnorm2d_backward(dout, cache):
    """Returns (dx, dgamma, dbeta). Eval mode treats the stats as constants."""
    xhat, inv_std, gamma, train = cache
    dgamma = np.einsum("nchw,nchw->c", dout, xhat)
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if not train:
        return dxhat * inv_std[None, :, None, None], dgamma, dbeta
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dx = (inv_std[None, :, None, None] / m) * (
        m * dxhat
        - dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        - xhat * np.einsum("nchw,nchw->c", dxhat, xhat)[None, :, None, None]
    )
    return dx, dgamma, dbeta


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dout):
    # subgradient at 0 is 0
    return dout * (x > 0)


def dense(x, weights, bias):
    """out = x @ W + b with x of shape (N, D) and W of shape (D, M)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeError(f"dense input {x.shape} incompatible with weights {weights.shape}")
    return x @ weights + bias


def dense_backward(x, weights, dout):
    dx = dout @ weights.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


def global_avg_pool(x):
    return _as4d(x).mean(axis=(2, 3))


def global_avg_pool_backward(x, dout):
    n, c, h, w = x.shape
    return np.broadcast_to(dout[:, :, None, None], x.shape) / (h * w)


def flop_cost(d_k, x_channels, y_channels, d_y, variant):
    """Analytic multiply-accumulate cost of one convolution at stride 1.

    standard:            d_k^2 * X * Y * d_y^2
    depthwise_separable: d_k^2 * X * d_y^2  +  X * Y * d_y^2
    """
    for name, v in (("d_k", d_k), ("x_channels", x_channels),
                    ("y_channels", y_channels), ("d_y", d_y)):
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if variant == "standard":
        total = d_k * d_k * x_channels * y_channels * d_y * d_y
        return CostReport(mult_adds=total, breakdown={"standard": total})
    if variant == "depthwise_separable":
        dw = d_k * d_k * x_channels * d_y * d_y
        pw = x_channels * y_channels * d_y * d_y
        return CostReport(mult_adds=dw + pw, breakdown={"depthwise": dw, "pointwise": pw})
    raise ValueError(f"unknown variant {variant!r}")


def speedup_ratio(d_k, x_channels, y_channels, d_y):
    """Standard-vs-separable cost quotient; depends only on d_k and Y
    (1/S = 1/Y + 1/d_k^2)."""
    std = flop_cost(d_k, x_channels, y_channels, d_y, "standard").mult_adds
    sep = flop_cost(d_k, x_channels, y_channels, d_y, "depthwise_separable").mult_adds
    return std / sep
