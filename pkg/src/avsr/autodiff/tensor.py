"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a float64 ndarray. Ops build the graph lazily by linking
each output to its parents together with a closure that maps the output
gradient onto parent gradients. :func:`backward` linearises that graph into a
:class:`Tape` and replays it once in reverse.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import NumericalError, ShapeError, SizeError

DTYPE = np.float64
_MAX_ELEMENTS = np.iinfo(np.intp).max // np.dtype(DTYPE).itemsize

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag})"

    def backward(self) -> None:
        backward(self)

    # -- operator sugar; implementations live in ops.py --------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)

    def mean(self, axis=None):
        from . import ops
        return ops.mean(self, axis)


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap an op result; link it into the graph when any parent needs grad."""
    if not np.isfinite(data).all():
        raise NumericalError(f"{op} produced non-finite values")
    out = Tensor(data)
    out._op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- construction -----------------------------------------------------------

@dataclass(frozen=True)
class RandomNormal:
    seed: int
    stddev: float = 1.0


def tensor_new(shape: Sequence[int], fill: float | RandomNormal = 0.0,
               requires_grad: bool = False, name: str | None = None) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ShapeError(f"negative extent in {shape}")
    if math.prod(shape) > _MAX_ELEMENTS:
        raise SizeError(f"shape {shape} exceeds the addressable size")
    if isinstance(fill, RandomNormal):
        rng = np.random.default_rng(fill.seed)
        data = rng.standard_normal(shape) * fill.stddev
    else:
        data = np.full(shape, float(fill), dtype=DTYPE)
    return Tensor(data, requires_grad=requires_grad, name=name)


# -- tape & backward --------------------------------------------------------

@dataclass
class TapeRecord:
    op: str
    inputs: tuple[int, ...]
    output: int
    node: Tensor = field(repr=False)


@dataclass
class Tape:
    """Topologically ordered record of the ops that produced a tensor."""

    records: list[TapeRecord]

    @classmethod
    def from_graph(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        records = [TapeRecord(n._op, tuple(id(p) for p in n._parents), id(n), n)
                   for n in order if n._parents]
        return cls(records)

    def is_topological(self) -> bool:
        produced: set[int] = set()
        outputs = {r.output for r in self.records}
        for r in self.records:
            if any(i in outputs and i not in produced for i in r.inputs):
                return False
            produced.add(r.output)
        return True

    def __len__(self) -> int:
        return len(self.records)


def backward(loss: Tensor, tape: Tape | None = None) -> Tape:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every leaf that requires grad.

    Intermediate tensors do not retain gradients. Returns the tape that was
    replayed so callers can audit it.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape is None:
        tape = Tape.from_graph(loss)
    if not loss.requires_grad:
        return tape
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=DTYPE)}
    if loss.is_leaf:
        _accumulate_leaf(loss, grads[id(loss)])
        return tape
    for rec in reversed(tape.records):
        node = rec.node
        g = grads.pop(id(node), None)
        if g is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if p.is_leaf:
                _accumulate_leaf(p, pg)
            elif id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    return tape


def _accumulate_leaf(leaf: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=DTYPE)
    if g.shape != leaf.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match leaf {leaf.shape}")
    if leaf.grad is None:
        leaf.grad = g.copy()
    else:
        leaf.grad += g


def zero_grads(params) -> None:
    for p in params:
        p.grad = None
