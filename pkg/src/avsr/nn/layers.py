"""Composite layers: front-end, ResNet backbones, BGRU, attention gate, heads."""
from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError
from .module import Module

BLOCKS_PER_STAGE = {18: (2, 2, 2, 2), 34: (3, 4, 6, 3)}


def kaiming(rng: np.random.Generator, shape, fan_in: int, gain: float = 2.0) -> Tensor:
    return Tensor(rng.standard_normal(shape) * math.sqrt(gain / fan_in), requires_grad=True)


def uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Conv(Module):
    def __init__(self, nd, cin, cout, kernel, stride=1, pad=0, bias=False, *, rng):
        kernel = (kernel,) * nd if isinstance(kernel, int) else tuple(kernel)
        self.stride = stride
        self.pad = pad
        self.weight = kaiming(rng, (cout, cin) + kernel, cin * math.prod(kernel))
        if bias:
            self.bias = zeros(cout)

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv(x, self.weight, getattr(self, "bias", None), self.stride, self.pad)


class BatchNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x: Tensor) -> Tensor:
        return ad.batchnorm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.eps, self.momentum, self.training)


class ConvBN(Module):
    def __init__(self, nd, cin, cout, kernel, stride=1, pad=0, *, rng):
        self.conv = Conv(nd, cin, cout, kernel, stride, pad, rng=rng)
        self.bn = BatchNorm(cout)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))


class SpatiotemporalFrontend(Module):
    """5x7x7 (time, height, width) conv, stride (1,2,2), then batchnorm and relu."""

    kernel = (5, 7, 7)
    stride = (1, 2, 2)
    pad = (2, 3, 3)

    def __init__(self, channels: int, *, rng):
        self.channels = channels
        self.conv = Conv(3, 1, channels, self.kernel, self.stride, self.pad, rng=rng)
        self.bn = BatchNorm(channels)

    def forward(self, video: Tensor) -> Tensor:
        if video.ndim != 5 or video.shape[1] != 1:
            raise ShapeError(f"front-end expects [B,1,T,H,W], got {video.shape}")
        _, _, t, h, w = video.shape
        if t < 1 or h < 7 or w < 7:
            raise ShapeError(f"front-end needs T>=1 and H,W>=7, got T={t} H={h} W={w}")
        return ad.relu(self.bn(self.conv(video)))


def frontend_forward(video: Tensor, fe: SpatiotemporalFrontend) -> Tensor:
    return fe(video)


class BasicBlock(Module):
    def __init__(self, nd: int, cin: int, cout: int, stride: int, *, rng):
        self.conv1 = ConvBN(nd, cin, cout, 3, stride, 1, rng=rng)
        self.conv2 = ConvBN(nd, cout, cout, 3, 1, 1, rng=rng)
        if stride != 1 or cin != cout:
            self.shortcut = ConvBN(nd, cin, cout, 1, stride, 0, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv2(ad.relu(self.conv1(x)))
        skip = self.shortcut(x) if hasattr(self, "shortcut") else x
        return ad.relu(y + skip)


class ResNetBackbone(Module):
    """Basic-block ResNet over 1-D or 2-D inputs.

    ``stem`` (used by the audio path) is a strided conv+bn+relu applied to the
    raw input before the residual stages; the video path gets its stem from
    the spatiotemporal front-end instead.
    """

    def __init__(self, nd: int, depth: int, in_channels: int, widths, *, rng,
                 stem_kernel: int | None = None, stem_stride: int = 1,
                 first_stride: int = 1):
        if depth not in BLOCKS_PER_STAGE:
            raise ValueError(f"unsupported ResNet depth {depth}")
        if nd not in (1, 2):
            raise ValueError("backbone dimensionality must be 1 or 2")
        self.nd = nd
        self.depth = depth
        self.widths = tuple(widths)
        if stem_kernel is not None:
            self.stem = ConvBN(nd, in_channels, self.widths[0], stem_kernel, stem_stride,
                               (stem_kernel - stem_stride) // 2, rng=rng)
            in_channels = self.widths[0]
        blocks = []
        for stage, (width, count) in enumerate(zip(self.widths, BLOCKS_PER_STAGE[depth])):
            for i in range(count):
                stride = (2 if stage > 0 else first_stride) if i == 0 else 1
                blocks.append(BasicBlock(nd, in_channels, width, stride, rng=rng))
                in_channels = width
        self.blocks = blocks

    @property
    def out_features(self) -> int:
        return self.widths[-1]

    def forward(self, x: Tensor) -> Tensor:
        if hasattr(self, "stem"):
            x = ad.relu(self.stem(x))
        for block in self.blocks:
            x = block(x)
        return x


def resnet2d_per_timestep(x: Tensor, backbone: ResNetBackbone) -> Tensor:
    """[B, C, T, H, W] -> [B, T, F]: fold time into batch, pool spatially, unfold."""
    if backbone.nd != 2:
        raise ShapeError("resnet2d_per_timestep needs a 2-D backbone")
    if x.ndim != 5:
        raise ShapeError(f"expected [B,C,T,H,W], got {x.shape}")
    b, c, t, h, w = x.shape
    frames = ad.reshape(ad.transpose(x, (0, 2, 1, 3, 4)), (b * t, c, h, w))
    fmap = backbone(frames)
    pooled = ad.mean(fmap, axis=(2, 3))
    return ad.reshape(pooled, (b, t, backbone.out_features))


def resnet1d_audio(waveform: Tensor, backbone: ResNetBackbone, timesteps: int) -> Tensor:
    """[B, 1, L] -> [B, T, F]; the final sequence is segment-averaged to exactly T steps."""
    if backbone.nd != 1:
        raise ShapeError("resnet1d_audio needs a 1-D backbone")
    if waveform.ndim != 3 or waveform.shape[1] != 1:
        raise ShapeError(f"expected [B,1,L] waveform, got {waveform.shape}")
    if waveform.shape[2] < timesteps:
        raise ShapeError(f"waveform length {waveform.shape[2]} is shorter than T={timesteps}")
    fmap = backbone(waveform)
    pooled = ad.segment_mean(fmap, timesteps, axis=2)
    return ad.transpose(pooled, (0, 2, 1))


class GRU(Module):
    """One direction of a GRU.

    z, r = sigmoid(x Wx + h U_zr + b); n = tanh(x Wn + (r*h) U_n + b_n);
    h' = z*h + (1-z)*n.
    """

    def __init__(self, in_features: int, hidden: int, *, rng):
        bound = 1.0 / math.sqrt(hidden)
        self.hidden = hidden
        self.w_input = uniform(rng, (in_features, 3 * hidden), bound)
        self.b_input = uniform(rng, (3 * hidden,), bound)
        self.u_gates = uniform(rng, (hidden, 2 * hidden), bound)
        self.u_cand = uniform(rng, (hidden, hidden), bound)

    def forward(self, x: Tensor, reverse: bool = False) -> Tensor:
        b, t, f = x.shape
        h_units = self.hidden
        proj = ad.add_bias(ad.reshape(x, (b * t, f)) @ self.w_input, self.b_input)
        proj = ad.reshape(proj, (b, t, 3 * h_units))
        gates_in = proj[:, :, : 2 * h_units]
        cand_in = proj[:, :, 2 * h_units:]
        h = Tensor(np.zeros((b, h_units)))
        outs: list[Tensor] = [None] * t  # type: ignore[list-item]
        for step in (range(t - 1, -1, -1) if reverse else range(t)):
            zr = ad.sigmoid(gates_in[:, step, :] + h @ self.u_gates)
            z = zr[:, :h_units]
            r = zr[:, h_units:]
            n = ad.tanh(cand_in[:, step, :] + (r * h) @ self.u_cand)
            h = n + z * (h - n)
            outs[step] = h
        return ad.stack(outs, axis=1)


class BidirectionalGRULayer(Module):
    def __init__(self, in_features: int, hidden: int, *, rng):
        self.forward_gru = GRU(in_features, hidden, rng=rng)
        self.backward_gru = GRU(in_features, hidden, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return ad.concat([self.forward_gru(x), self.backward_gru(x, reverse=True)], axis=2)


class BGRU(Module):
    """Stack of bidirectional GRU layers; output width 2 * hidden."""

    def __init__(self, in_features: int, hidden: int, num_layers: int = 2, *, rng):
        self.hidden = hidden
        layers = []
        for _ in range(num_layers):
            layers.append(BidirectionalGRULayer(in_features, hidden, rng=rng))
            in_features = 2 * hidden
        self.layers = layers

    @property
    def out_features(self) -> int:
        return 2 * self.hidden

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ShapeError(f"BGRU expects [B,T,F], got {x.shape}")
        for layer in self.layers:
            x = layer(x)
        return x


def bgru_forward(x: Tensor, layer: BGRU) -> Tensor:
    return layer(x)


class TemporalAttention(Module):
    """Learned per-timestep gate sigmoid(raw[t]), independent of the input."""

    def __init__(self, timesteps: int, site: str = "video"):
        self.site = site
        self.raw = zeros(timesteps)

    def gate(self) -> np.ndarray:
        return ad.ops._sigmoid(self.raw.data)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.raw.shape[0]:
            raise ShapeError(f"attention of length {self.raw.shape[0]} cannot gate {x.shape}")
        return ad.scale_timesteps(x, ad.sigmoid(self.raw))


def attention_apply(x: Tensor, attn: TemporalAttention) -> Tensor:
    return attn(x)


class TemporalConvBackend(Module):
    """Two temporal convs (kernel 5, pad 2) with bn+relu, mean over time, affine to logits."""

    kernel = 5

    def __init__(self, in_features: int, num_classes: int, hidden: int | None = None, *, rng):
        hidden = hidden or in_features
        self.conv1 = ConvBN(1, in_features, hidden, self.kernel, 1, self.kernel // 2, rng=rng)
        self.conv2 = ConvBN(1, hidden, hidden, self.kernel, 1, self.kernel // 2, rng=rng)
        self.weight = kaiming(rng, (hidden, num_classes), hidden, gain=1.0)
        self.bias = zeros(num_classes)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ShapeError(f"temporal back-end expects [B,T,F], got {x.shape}")
        if x.shape[1] < self.kernel:
            raise ShapeError(f"T={x.shape[1]} is shorter than the back-end kernel {self.kernel}")
        y = ad.transpose(x, (0, 2, 1))
        y = ad.relu(self.conv1(y))
        y = ad.relu(self.conv2(y))
        pooled = ad.mean(y, axis=2)
        return ad.add_bias(pooled @ self.weight, self.bias)


def temporal_conv_backend_forward(x: Tensor, backend: TemporalConvBackend) -> Tensor:
    return backend(x)


class Classifier(Module):
    """Shared affine map applied at every timestep."""

    def __init__(self, in_features: int, num_classes: int, *, rng):
        self.num_classes = num_classes
        self.weight = kaiming(rng, (in_features, num_classes), in_features, gain=1.0)
        self.bias = zeros(num_classes)

    def logits(self, x: Tensor) -> Tensor:
        b, t, f = x.shape
        out = ad.add_bias(ad.reshape(x, (b * t, f)) @ self.weight, self.bias)
        return ad.reshape(out, (b, t, self.num_classes))

    def forward(self, x: Tensor) -> Tensor:
        return ad.softmax(self.logits(x), axis=-1)


def classify_per_timestep(x: Tensor, clf: Classifier) -> Tensor:
    return clf(x)
