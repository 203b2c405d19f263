"""Adam with parameter groups, step-decay schedule, early stopping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..errors import OptimizerError


@dataclass
class ParamGroup:
    name: str
    params: dict[str, Tensor]
    lr: float


def make_param_groups(named_params, base_lr: float, attention_lr: float) -> list[ParamGroup]:
    """Split trainable parameters into the base group and the attention-gate group."""
    base, attn = {}, {}
    for name, p in named_params:
        if not p.requires_grad:
            continue
        (attn if name.endswith("attention.raw") else base)[name] = p
    groups = [ParamGroup("base", base, base_lr)]
    if attn:
        groups.append(ParamGroup("attention", attn, attention_lr))
    return groups


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


class Adam:
    def __init__(self, groups: list[ParamGroup], beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState()
        for g in groups:
            for name, p in g.params.items():
                self.state.m[name] = np.zeros(p.shape)
                self.state.v[name] = np.zeros(p.shape)

    def named_params(self):
        for g in self.groups:
            yield from g.params.items()

    def zero_grad(self) -> None:
        for _, p in self.named_params():
            p.grad = None

    def set_lr(self, lrs: dict[str, float]) -> None:
        for g in self.groups:
            g.lr = lrs[g.name]

    def step(self) -> None:
        missing = [n for n, p in self.named_params() if p.grad is None]
        if missing:
            raise OptimizerError(f"no gradient for trainable parameter(s): {', '.join(missing[:5])}")
        st = self.state
        st.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** st.step
        c2 = 1.0 - b2 ** st.step
        for g in self.groups:
            for name, p in g.params.items():
                grad = p.grad
                m, v = st.m[name], st.v[name]
                m *= b1
                m += (1.0 - b1) * grad
                v *= b2
                v += (1.0 - b2) * grad * grad
                p.data -= g.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(optimizer: Adam) -> None:
    optimizer.step()


def clip_grad_norm(params, max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total


@dataclass
class LRSchedule:
    kind: str = "step"
    factor: float = 0.5
    period: int = 10

    def __call__(self, lr0: float, epoch: int) -> float:
        if self.kind == "constant":
            return lr0
        if self.kind != "step":
            raise ValueError(f"unknown schedule {self.kind!r}")
        return lr0 * self.factor ** (epoch // self.period)


@dataclass
class EarlyStop:
    """Stop once ``epoch - best_epoch > patience``; improvement is strictly higher."""

    patience: int = 5
    best: float = -math.inf
    best_epoch: int = -1

    def update(self, epoch: int, metric: float) -> bool:
        """Record ``metric`` for ``epoch``; return True when training should stop."""
        if metric > self.best:
            self.best = metric
            self.best_epoch = epoch
        return self.should_stop(epoch)

    def improved_at(self, epoch: int) -> bool:
        return self.best_epoch == epoch

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch > self.patience
