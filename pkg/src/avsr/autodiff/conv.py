"""Convolution (1/2/3-D, cross-correlation) and batch normalization.

Convolutions lower to a single GEMM over an im2col matrix built with
``sliding_window_view``. The input gradient is scattered back one kernel
offset at a time, and skipped entirely when the input does not need a gradient
(raw video and waveform inputs never do).
"""
from __future__ import annotations

import math
from itertools import product
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatchError, ShapeError
from .tensor import DTYPE, Tensor, make_node


def _per_axis(v, nd: int, what: str) -> tuple[int, ...]:
    if isinstance(v, int):
        return (v,) * nd
    v = tuple(int(i) for i in v)
    if len(v) != nd:
        raise ShapeError(f"{what} needs {nd} entries, got {v}")
    return v


def output_extent(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def conv(x: Tensor, weight: Tensor, bias: Tensor | None = None,
         stride: int | Sequence[int] = 1, pad: int | Sequence[int] = 0) -> Tensor:
    """N-d convolution. ``x`` is [B, Cin, *S], ``weight`` is [Cout, Cin, *K]."""
    nd = weight.ndim - 2
    if nd < 1 or x.ndim != nd + 2:
        raise ShapeError(f"conv: input {x.shape} incompatible with weight {weight.shape}")
    stride = _per_axis(stride, nd, "stride")
    pad = _per_axis(pad, nd, "pad")
    if any(s < 1 for s in stride) or any(p < 0 for p in pad):
        raise ShapeError(f"conv: invalid stride {stride} / pad {pad}")
    b, cin, *spatial = x.shape
    cout, cin_w, *kernel = weight.shape
    if cin != cin_w:
        raise ShapeError(f"conv: input has {cin} channels, weight expects {cin_w}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv: bias {bias.shape} does not match {cout} output channels")
    out_sp = tuple(output_extent(s, k, st, p) for s, k, st, p in zip(spatial, kernel, stride, pad))
    if any(o <= 0 for o in out_sp) or any(k > s + 2 * p for s, k, p in zip(spatial, kernel, pad)):
        raise ShapeError(f"conv: kernel {tuple(kernel)} does not fit input {tuple(spatial)} with pad {pad}")

    xp = x.data
    if any(pad):
        xp = np.pad(xp, ((0, 0), (0, 0)) + tuple((p, p) for p in pad))
    sp_axes = tuple(range(2, 2 + nd))
    win = sliding_window_view(xp, kernel, axis=sp_axes)
    win = win[(slice(None), slice(None)) + tuple(slice(0, (o - 1) * st + 1, st) for o, st in zip(out_sp, stride))]
    # [B, Cin, *O, *K] -> [B, *O, Cin, *K]
    order = (0,) + tuple(range(2, 2 + nd)) + (1,) + tuple(range(2 + nd, 2 + 2 * nd))
    n_rows = b * math.prod(out_sp)
    cols = win.transpose(order).reshape(n_rows, cin * math.prod(kernel))
    wmat = weight.data.reshape(cout, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(np.moveaxis(out.reshape(b, *out_sp, cout), -1, 1))

    parents = (x, weight) if bias is None else (x, weight, bias)
    padded_shape = xp.shape

    def _bw(g):
        gm = np.moveaxis(g, 1, -1).reshape(n_rows, cout)
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(b, *out_sp, cin, *kernel)
            # -> [B, Cin, *K, *O] so each kernel offset is a contiguous-ish block
            dcols = dcols.transpose((0, 1 + nd) + tuple(range(2 + nd, 2 + 2 * nd)) + tuple(range(1, 1 + nd)))
            gxp = np.zeros(padded_shape, dtype=DTYPE)
            for kk in product(*(range(k) for k in kernel)):
                sl = tuple(slice(k, k + (o - 1) * st + 1, st) for k, o, st in zip(kk, out_sp, stride))
                gxp[(slice(None), slice(None)) + sl] += dcols[(slice(None), slice(None)) + kk]
            crop = tuple(slice(p, p + s) for p, s in zip(pad, spatial))
            gx = gxp[(slice(None), slice(None)) + crop]
        if bias is None:
            return gx, gw
        gb = g.sum(axis=(0,) + sp_axes) if bias.requires_grad else None
        return gx, gw, gb

    return make_node(out, parents, _bw, f"conv{nd}d")


def conv1d(x, weight, bias=None, stride=1, pad=0) -> Tensor:
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects [B,C,L] input and [Cout,Cin,K] weight, got {x.shape}, {weight.shape}")
    return conv(x, weight, bias, stride, pad)


def conv2d(x, weight, bias=None, stride=1, pad=0) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and weight, got {x.shape}, {weight.shape}")
    return conv(x, weight, bias, stride, pad)


def conv3d(x, weight, bias=None, stride=1, pad=0) -> Tensor:
    if x.ndim != 5 or weight.ndim != 5:
        raise ShapeError(f"conv3d expects 5-d input and weight, got {x.shape}, {weight.shape}")
    return conv(x, weight, bias, stride, pad)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray, running_var: np.ndarray,
              eps: float = 1e-5, momentum: float = 0.1, training: bool = True) -> Tensor:
    """Per-channel batch normalization over every axis except 1.

    In training mode the running statistics are updated in place (unbiased
    variance, exponential average with weight ``momentum``).
    """
    if x.ndim < 2:
        raise ShapeError(f"batchnorm needs [N, C, ...] input, got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm: gamma/beta must have length {c}")
    axes = (0,) + tuple(range(2, x.ndim))
    view = (1, c) + (1,) * (x.ndim - 2)
    n = x.size // c if c else 0
    xd = x.data
    if training:
        if n == 0:
            raise DegenerateBatchError("batchnorm: empty batch in training mode")
        mu = xd.mean(axis=axes)
        centred = xd - mu.reshape(view)
        var = (centred * centred).mean(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * (var * n / max(n - 1, 1))
    else:
        mu, var = running_mean, running_var
        centred = xd - mu.reshape(view)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv_std.reshape(view)
    out = xhat * gamma.data.reshape(view) + beta.data.reshape(view)

    def _bw(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(view)
            if training:
                gx = (inv_std.reshape(view) / n) * (
                    n * dxhat
                    - dxhat.sum(axis=axes).reshape(view)
                    - xhat * (dxhat * xhat).sum(axis=axes).reshape(view))
            else:
                gx = dxhat * inv_std.reshape(view)
        return gx, ggamma, gbeta

    return make_node(out, (x, gamma, beta), _bw, "batchnorm")
