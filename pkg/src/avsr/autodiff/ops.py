"""Elementwise, linear-algebra, shape and reduction ops.

Binary elementwise ops require equal shapes (a python scalar is accepted on
either side). The only broadcast is :func:`add_bias`, which adds a vector
along one axis; everything else needs an explicit reshape.
"""
from __future__ import annotations

import contextlib
import math
from typing import Sequence

import numpy as np

from ..errors import LabelError, ShapeError
from .tensor import DTYPE, Tensor, make_node


def _is_scalar(x) -> bool:
    return isinstance(x, (int, float, np.floating, np.integer))


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    if _is_scalar(b):
        return make_node(a.data + b, (a,), lambda g: (g,), "add_scalar")
    if _is_scalar(a):
        return add(b, a)
    _check_same(a, b, "add")
    return make_node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    if _is_scalar(b):
        return make_node(a.data - b, (a,), lambda g: (g,), "sub_scalar")
    if _is_scalar(a):
        return make_node(a - b.data, (b,), lambda g: (-g,), "rsub_scalar")
    _check_same(a, b, "sub")
    return make_node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    if _is_scalar(b):
        s = float(b)
        return make_node(a.data * s, (a,), lambda g: (g * s,), "scale")
    if _is_scalar(a):
        return mul(b, a)
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return make_node(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(xd)
    return make_node(out, (x,), lambda g: (g / xd,), "log")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # branch-free stable form: exp never sees a positive argument
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


_kink_log: list[np.ndarray] | None = None


@contextlib.contextmanager
def record_kinks():
    """Collect the active-unit mask of every relu evaluated inside the block.

    Two evaluations whose mask lists differ straddle a kink, so a finite
    difference between them does not estimate a derivative.
    """
    global _kink_log
    prev, _kink_log = _kink_log, []
    try:
        yield _kink_log
    finally:
        _kink_log = prev


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    if _kink_log is not None:
        _kink_log.append(mask)
    return make_node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = {"relu": relu, "sigmoid": sigmoid, "tanh": tanh}[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


# -- linear algebra -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def _bw(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return make_node(ad @ bd, (a, b), _bw, "matmul")


def add_bias(x: Tensor, bias: Tensor, axis: int = -1) -> Tensor:
    """Add a length-``x.shape[axis]`` vector along ``axis``."""
    axis = axis % x.ndim
    if bias.ndim != 1 or bias.shape[0] != x.shape[axis]:
        raise ShapeError(f"add_bias: bias {bias.shape} does not fit axis {axis} of {x.shape}")
    view = [1] * x.ndim
    view[axis] = -1
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)
    return make_node(x.data + bias.data.reshape(view), (x, bias),
                     lambda g: (g, g.sum(axis=reduce_axes)), "add_bias")


def scale_timesteps(x: Tensor, gate: Tensor) -> Tensor:
    """``out[b, t, f] = x[b, t, f] * gate[t]``."""
    if x.ndim != 3 or gate.ndim != 1 or gate.shape[0] != x.shape[1]:
        raise ShapeError(f"scale_timesteps: gate {gate.shape} does not match timesteps of {x.shape}")
    xd, gd = x.data, gate.data
    g3 = gd[None, :, None]
    return make_node(xd * g3, (x, gate),
                     lambda g: (g * g3, (g * xd).sum(axis=(0, 2))), "scale_timesteps")


# -- shape ---------------------------------------------------------------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {src} -> {tuple(shape)}: {exc}") from None
    return make_node(out, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))
    return make_node(out, (x,), lambda g: (g.transpose(inv),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]
    if np.shares_memory(out, x.data):
        out = out.copy()
    src_shape = x.shape

    def _bw(g):
        full = np.zeros(src_shape, dtype=DTYPE)
        if _is_advanced(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return make_node(out, (x,), _bw, "getitem")


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis):
            raise ShapeError(f"concat: incompatible shapes {ref.shape} and {t.shape} on axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def _bw(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))

    return make_node(out, tensors, _bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError(f"stack: shapes {tensors[0].shape} and {t.shape} differ")
    out = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)

    def _bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return make_node(out, tensors, _bw, "stack")


def flip(x: Tensor, axis: int) -> Tensor:
    out = np.ascontiguousarray(np.flip(x.data, axis=axis))
    return make_node(out, (x,), lambda g: (np.flip(g, axis=axis),), "flip")


# -- reductions ------------------------------------------------------------------

def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    axes = _norm_axes(axis, x.ndim)
    src = x.shape
    keep = tuple(1 if i in axes else s for i, s in enumerate(src))
    return make_node(x.data.sum(axis=axes), (x,),
                     lambda g: (np.broadcast_to(g.reshape(keep), src).copy(),), "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = math.prod(x.shape[a] for a in axes)
    src = x.shape
    keep = tuple(1 if i in axes else s for i, s in enumerate(src))
    return make_node(x.data.mean(axis=axes), (x,),
                     lambda g: (np.broadcast_to(g.reshape(keep) / n, src).copy(),), "mean")


def segment_mean(x: Tensor, segments: int, axis: int = -1) -> Tensor:
    """Average ``segments`` contiguous, near-equal spans along ``axis``.

    Span boundaries are ``floor(i * n / segments)`` so spans differ by at most one.
    """
    axis = axis % x.ndim
    n = x.shape[axis]
    if segments < 1 or n < segments:
        raise ShapeError(f"segment_mean: cannot split length {n} into {segments} segments")
    bounds = segment_bounds(n, segments)
    lengths = np.diff(bounds)
    sums = np.add.reduceat(x.data, bounds[:-1], axis=axis)
    view = [1] * x.ndim
    view[axis] = segments
    out = sums / lengths.reshape(view)
    owner = np.repeat(np.arange(segments), lengths)

    def _bw(g):
        per = g / lengths.reshape(view)
        return (np.take(per, owner, axis=axis),)

    return make_node(out, (x,), _bw, "segment_mean")


def segment_bounds(n: int, segments: int) -> np.ndarray:
    return (np.arange(segments + 1) * n) // segments


# -- softmax family ------------------------------------------------------------------

def _log_softmax(v: np.ndarray, axis: int) -> np.ndarray:
    shifted = v - v.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    out = np.exp(_log_softmax(x.data, axis))

    def _bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), _bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    out = _log_softmax(x.data, axis)
    probs = np.exp(out)

    def _bw(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (x,), _bw, "log_softmax")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [B, C] logits, got {logits.shape}")
    labels = np.asarray(labels)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"cross_entropy: {labels.shape[0] if labels.ndim else 0} labels for batch of {b}")
    if not np.issubdtype(labels.dtype, np.integer) or (labels < 0).any() or (labels >= c).any():
        raise LabelError(f"labels must be integers in [0, {c})")
    logp = _log_softmax(logits.data, axis=1)
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def _bw(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (g / b),)

    return make_node(np.asarray(loss), (logits,), _bw, "cross_entropy")
