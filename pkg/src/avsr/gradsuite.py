"""Gradient-check suites at three scopes: primitive ops, layers, whole model.

Every case reduces its output to a scalar through a fixed random weighting so
that no gradient is trivially uniform.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import GradCheckReport, Tensor, grad_check, grad_check_sampled
from .autodiff.tensor import make_node
from .models import FusedModel, ModelConfig
from .nn import (BGRU, GRU, BasicBlock, BatchNorm, Classifier, Conv, ConvBN, Module,
                 ResNetBackbone, SpatiotemporalFrontend, TemporalAttention, TemporalConvBackend)

EPS = 1e-4
TOL = 1e-4
PROBES = 32


@dataclass
class CaseResult:
    scope: str
    name: str
    report: GradCheckReport

    def line(self) -> str:
        return f"{self.scope}\t{self.name}\t{self.report.summary()}"


def _weighted(out: Tensor, seed: int) -> Tensor:
    w = np.random.default_rng([seed, 99]).normal(size=out.shape)
    return ad.tsum(out * Tensor(w))


def _param(rng, shape, name, positive=False, scale=1.0) -> Tensor:
    data = rng.normal(size=shape) * scale
    if positive:
        data = np.abs(data) + 0.5
    return Tensor(data, requires_grad=True, name=name)


def _check_op(name: str, fn: Callable[..., Tensor], shapes, seed: int, **kinds) -> CaseResult:
    rng = np.random.default_rng([seed, len(name)])
    params = [_param(rng, s, f"{name}.{i}", positive=kinds.get("positive", False))
              for i, s in enumerate(shapes)]
    report = grad_check(lambda: _weighted(fn(*params), seed), params, EPS, TOL, PROBES, seed,
                        names=[p.name for p in params])
    return CaseResult("op", name, report)


def _op_cases() -> list[tuple[str, Callable, list, dict]]:
    labels = np.array([0, 2, 1, 2])
    return [
        ("add", ad.add, [(3, 4), (3, 4)], {}),
        ("sub", ad.sub, [(3, 4), (3, 4)], {}),
        ("mul", ad.mul, [(3, 4), (3, 4)], {}),
        ("scalar_mul", lambda a: a * 2.5 + 1.0, [(5,)], {}),
        ("exp", ad.exp, [(3, 4)], {}),
        ("log", ad.log, [(3, 4)], {"positive": True}),
        ("sigmoid", ad.sigmoid, [(3, 4)], {}),
        ("tanh", ad.tanh, [(3, 4)], {}),
        ("relu", ad.relu, [(3, 4)], {}),
        ("matmul", ad.matmul, [(3, 4), (4, 5)], {}),
        ("add_bias", lambda x, b: ad.add_bias(x, b, axis=1), [(2, 3, 4), (3,)], {}),
        ("scale_timesteps", ad.scale_timesteps, [(2, 5, 3), (5,)], {}),
        ("reshape", lambda x: ad.reshape(x, (4, 3)), [(3, 4)], {}),
        ("transpose", lambda x: ad.transpose(x, (2, 0, 1)), [(2, 3, 4)], {}),
        ("getitem_slice", lambda x: x[:, 1:3], [(3, 4)], {}),
        ("getitem_fancy", lambda x: ad.getitem(x, (np.array([0, 2, 2]), slice(None))), [(3, 4)], {}),
        ("concat", lambda a, b: ad.concat([a, b], axis=1), [(2, 3), (2, 2)], {}),
        ("stack", lambda a, b: ad.stack([a, b], axis=1), [(2, 3), (2, 3)], {}),
        ("flip", lambda x: ad.flip(x, 1), [(2, 5)], {}),
        ("sum", lambda x: ad.tsum(x, axis=1), [(3, 4)], {}),
        ("mean", lambda x: ad.mean(x, axis=(0, 2)), [(2, 3, 4)], {}),
        ("segment_mean", lambda x: ad.segment_mean(x, 3, axis=2), [(2, 2, 10)], {}),
        ("softmax", lambda x: ad.softmax(x, axis=-1), [(3, 5)], {}),
        ("log_softmax", lambda x: ad.log_softmax(x, axis=-1), [(3, 5)], {}),
        ("cross_entropy", lambda x: ad.cross_entropy(x, labels), [(4, 3)], {}),
        ("conv1d", lambda x, w, b: ad.conv1d(x, w, b, stride=2, pad=1), [(2, 3, 9), (4, 3, 3), (4,)], {}),
        ("conv2d", lambda x, w, b: ad.conv2d(x, w, b, stride=(1, 2), pad=1),
         [(2, 2, 5, 6), (3, 2, 3, 3), (3,)], {}),
        ("conv3d", lambda x, w, b: ad.conv3d(x, w, b, stride=(1, 2, 2), pad=(1, 1, 1)),
         [(1, 2, 3, 5, 5), (2, 2, 3, 3, 3), (2,)], {}),
        ("batchnorm_train", lambda x, g, b: ad.batchnorm(x, g, b, np.zeros(3), np.ones(3),
                                                         training=True), [(4, 3, 5), (3,), (3,)], {}),
        ("batchnorm_eval", lambda x, g, b: ad.batchnorm(x, g, b, np.full(3, 0.2), np.full(3, 1.5),
                                                        training=False), [(4, 3, 5), (3,), (3,)], {}),
    ]


def op_suite(seed: int = 0) -> list[CaseResult]:
    return [_check_op(name, fn, shapes, seed, **kinds) for name, fn, shapes, kinds in _op_cases()]


def _check_module(name: str, module: Module, inputs: list[Tensor], seed: int,
                  call: Callable | None = None) -> CaseResult:
    named = list(module.named_parameters())
    params = [p for _, p in named] + inputs
    names = [f"{name}.{n}" for n, _ in named] + [f"{name}.input{i}" for i in range(len(inputs))]
    call = call or (lambda *xs: module(*xs))
    report = grad_check(lambda: _weighted(call(*inputs), seed), params, EPS, TOL, PROBES, seed,
                        names=names)
    return CaseResult("layer", name, report)


def layer_suite(seed: int = 0) -> list[CaseResult]:
    rng = np.random.default_rng([seed, 7])

    def x(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    def r():
        return np.random.default_rng([seed, int(rng.integers(1 << 30))])

    out = [
        _check_module("conv", Conv(2, 2, 3, 3, 1, 1, bias=True, rng=r()), [x(2, 2, 5, 5)], seed),
        _check_module("batchnorm", BatchNorm(3), [x(4, 3, 6)], seed),
        _check_module("conv_bn", ConvBN(1, 2, 3, 3, 2, 1, rng=r()), [x(3, 2, 9)], seed),
        _check_module("frontend", SpatiotemporalFrontend(2, rng=r()), [x(2, 1, 3, 8, 8)], seed),
        _check_module("basic_block", BasicBlock(2, 2, 3, 2, rng=r()), [x(2, 2, 6, 6)], seed),
        _check_module("resnet1d", ResNetBackbone(1, 18, 1, (2, 3, 3, 4), rng=r(), stem_kernel=8,
                                                 stem_stride=2), [x(2, 1, 64)], seed),
        _check_module("gru", GRU(3, 4, rng=r()), [x(2, 3, 3)], seed),
        _check_module("bgru", BGRU(3, 4, 2, rng=r()), [x(2, 3, 3)], seed),
        _check_module("classifier", Classifier(4, 3, rng=r()), [x(2, 3, 4)], seed),
        _check_module("temporal_conv_backend", TemporalConvBackend(3, 4, hidden=4, rng=r()),
                      [x(3, 6, 3)], seed),
    ]
    attn = TemporalAttention(4)
    attn.raw.data[:] = rng.normal(size=4)
    out.append(_check_module("attention", attn, [x(2, 4, 3)], seed))
    return out


def sequence_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    b, t, c = logits.shape
    return ad.cross_entropy(ad.reshape(logits, (b * t, c)), np.repeat(labels, t))


def model_suite(seed: int = 0, coords: int = 64, cfg: ModelConfig | None = None) -> list[CaseResult]:
    """Sampled check of the whole tiny fused model (training-mode batchnorm)."""
    cfg = cfg or ModelConfig.tiny()
    model = FusedModel(cfg, seed=seed)
    rng = np.random.default_rng([seed, 11])
    b = 2
    video = Tensor(rng.uniform(size=(b, 1, cfg.timesteps, cfg.height, cfg.width)))
    audio = Tensor(rng.normal(scale=0.3, size=(b, 1, cfg.audio_length)))
    labels = np.arange(b) % cfg.num_classes
    for p in model.parameters():
        # move gates off zero so that attention gradients are not symmetric
        if p.shape == (cfg.timesteps,):
            p.data[:] = rng.normal(size=p.shape)
    report = grad_check_sampled(lambda: sequence_loss(model.logits(video, audio), labels),
                                list(model.named_parameters()), coords, EPS, TOL, seed)
    return [CaseResult("model", "fused_tiny", report)]


def _faulty_square(x: Tensor) -> Tensor:
    """x**2 with a deliberately wrong backward (factor 3 instead of 2)."""
    return make_node(x.data ** 2, (x,), lambda g: (3.0 * x.data * g,), "faulty_square")


def injected_bug_case(seed: int = 0) -> CaseResult:
    rng = np.random.default_rng(seed)
    weight = Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="injected.weight")
    report = grad_check(lambda: _weighted(_faulty_square(weight), seed), [weight], EPS, TOL,
                        PROBES, seed, names=["injected.weight"])
    return CaseResult("op", "injected_bug", report)


SCOPES = {"op": op_suite, "layer": layer_suite, "model": model_suite}


def run_scope(scope: str, seed: int = 0, inject_bug: bool = False) -> list[CaseResult]:
    if scope not in SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    results = SCOPES[scope](seed)
    if inject_bug:
        results.append(injected_bug_case(seed))
    return results
