"""Differentiable primitives.

Every function takes/returns :class:`Tensor` (plain arrays and scalars are
promoted) and registers a backward closure producing one gradient per input.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, grad_enabled as _grad_on, make_node

LN_EPS = 1e-5
L2_EPS = 1e-12
# tanh-approximate GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
GELU_C = math.sqrt(2.0 / math.pi)  # 0.7978845608028654, hard-coded in the kernels
GELU_A = 0.044715


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return make_node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return make_node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb
    return make_node(a.data * b.data, (a, b), bw, "mul")


def scale(x, s: float) -> Tensor:
    x = as_tensor(x)
    s = float(s)
    return make_node(x.data * s, (x,), lambda g: (g * s,), "scale")


def gelu(x) -> Tensor:
    from . import kernels as _k

    x = as_tensor(x)
    out, deriv = _k.gelu_forward(x.data, x.requires_grad and _grad_on())
    return make_node(out, (x,), lambda g: (g * deriv,), "gelu")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


# -- reductions and layout -------------------------------------------------------

def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)
    return make_node(out, (x,), bw, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    """Mean over one or several named axes."""
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    n = 1
    for a in axes:
        n *= x.shape[a]
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, x.shape).copy(),)
    return make_node(out, (x,), bw, "mean")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return make_node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(a % x.ndim for a in axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return make_node(out, (x,), lambda g: (np.ascontiguousarray(g.transpose(inv)),), "transpose")


def concatenate(xs, axis=0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))
    return make_node(out, tuple(xs), bw, "concatenate")


def take(x, indices) -> Tensor:
    """Gather rows (axis 0); repeated indices accumulate gradient."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    out = x.data[idx]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)
    return make_node(out, (x,), bw, "take")


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product ``[..., m, k] @ [..., k, n]`` with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from exc

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb
    return make_node(out, (a, b), bw, "matmul")


def linear(x, w, b=None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is [in, out]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ w.data
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)
    out = out.reshape(lead + (w.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, w.shape[1])
        gx = (g2 @ w.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)
    return make_node(out, parents, bw, "linear")


# -- normalisation and attention pieces ----------------------------------------

def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return make_node(y, (x,), bw, "softmax")


def layer_norm(x, gamma, beta, axis=-1, eps: float = LN_EPS) -> Tensor:
    """Normalise each slice along ``axis`` to zero mean / unit variance, then affine.

    ``gamma`` and ``beta`` are 1-d with the length of ``axis``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axis = axis % x.ndim
    n = x.shape[axis]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(f"layer_norm: affine params {gamma.shape}/{beta.shape} "
                         f"do not match axis of length {n}")
    bshape = (n,) + (1,) * (x.ndim - axis - 1)
    g_b = gamma.data.reshape(bshape)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * g_b + beta.data.reshape(bshape)
    other = tuple(i for i in range(x.ndim) if i != axis)

    def bw(g):
        gx = None
        if x.requires_grad:
            dxhat = g * g_b
            gx = inv * (dxhat - dxhat.mean(axis=axis, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axis, keepdims=True))
        ggam = (g * xhat).sum(axis=other) if gamma.requires_grad else None
        gbeta = g.sum(axis=other) if beta.requires_grad else None
        return gx, ggam, gbeta
    return make_node(out, (x, gamma, beta), bw, "layer_norm")


def l2_normalize(x, axis=-1, eps: float = L2_EPS) -> Tensor:
    """``x / (||x|| + eps)`` along ``axis``."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    denom = norm + eps
    out = x.data / denom

    def bw(g):
        dot = (g * x.data).sum(axis=axis, keepdims=True)
        safe = np.where(norm > 0, norm, 1.0)
        coef = np.where(norm > 0, dot / (safe * denom * denom), 0.0)
        return (g / denom - x.data * coef,)
    return make_node(out, (x,), bw, "l2_normalize")


def cosine_similarity(a, b, axis=-1) -> Tensor:
    return sum(mul(l2_normalize(a, axis), l2_normalize(b, axis)), axis=axis)


# -- temporal convolutions ---------------------------------------------------------

def pad_time(x, padding) -> Tensor:
    """Pad the last axis according to a :class:`PaddingSpec`.

    Implemented as a gather through an index map so reflect/replicate pads
    of any width share one backward (scatter-add).
    """
    x = as_tensor(x)
    T = x.shape[-1]
    src = padding.index_map(T)
    valid = src >= 0
    safe = np.where(valid, src, 0)
    out = x.data[..., safe]
    if not valid.all():
        out = out * valid
    out = np.ascontiguousarray(out)

    def bw(g):
        gx = np.zeros_like(x.data)
        # scatter each padded column back onto its source frame
        gv = g[..., valid]
        flat = gv.reshape(-1, gv.shape[-1])
        gxf = gx.reshape(-1, T)
        for col, s in enumerate(src[valid]):
            gxf[:, s] += flat[:, col]
        return (gx,)
    return make_node(out, (x,), bw, "pad_time")


def depthwise_conv1d(x, kernels, padding) -> Tensor:
    """Per-channel 1-d cross-correlation along the last axis.

    ``x`` is [..., C, T], ``kernels`` is [C, K]; channel c only ever sees
    kernel c. ``padding`` must add exactly K - 1 frames so the output keeps
    length T.
    """
    from . import kernels as _k

    x, kernels = as_tensor(x), as_tensor(kernels)
    if kernels.ndim != 2 or x.ndim < 2 or x.shape[-2] != kernels.shape[0]:
        raise ShapeError(f"depthwise_conv1d: input {x.shape} vs kernels {kernels.shape}")
    K = kernels.shape[1]
    padding.check_kernel(K)
    xp = pad_time(x, padding)
    lead = xp.shape[:-2]
    C, Tp = xp.shape[-2:]
    xp3 = xp.data.reshape(-1, C, Tp)
    out = _k.dwconv_forward(xp3, kernels.data)
    T = out.shape[-1]

    def bw(g):
        dxp, dw = _k.dwconv_backward(np.ascontiguousarray(g.reshape(-1, C, T)), xp3, kernels.data)
        return dxp.reshape(xp.shape), dw
    return make_node(out.reshape(lead + (C, T)), (xp, kernels), bw, "depthwise_conv1d")


def pointwise_conv(x, w, b=None) -> Tensor:
    """1x1 convolution: ``w @ x + b`` at every time step; x is [..., C_in, T]."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.ndim < 2 or x.shape[-2] != w.shape[1]:
        raise ShapeError(f"pointwise_conv: input {x.shape} vs weight {w.shape}")
    C_out, C_in = w.shape
    lead, T = x.shape[:-2], x.shape[-1]
    # one GEMM over every (batch, time) column instead of many skinny ones
    xt = np.ascontiguousarray(np.swapaxes(x.data, -1, -2)).reshape(-1, C_in)
    yt = xt @ w.data.T
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (C_out,):
            raise ShapeError(f"pointwise_conv: bias {b.shape} vs weight {w.shape}")
        yt += b.data
        parents = (x, w, b)
    out = np.ascontiguousarray(np.swapaxes(yt.reshape(lead + (T, C_out)), -1, -2))

    def bw(g):
        gt = np.ascontiguousarray(np.swapaxes(g, -1, -2)).reshape(-1, C_out)
        gx = gw = None
        if x.requires_grad:
            gx = np.ascontiguousarray(np.swapaxes((gt @ w.data).reshape(lead + (T, C_in)), -1, -2))
        if w.requires_grad:
            gw = gt.T @ xt
        if b is None:
            return gx, gw
        return gx, gw, gt.sum(axis=0)
    return make_node(out, parents, bw, "pointwise_conv")
