"""Audio-only, video-only and fused word classifiers."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ConfigError, ProbabilityError, ShapeError
from .nn import (BGRU, Classifier, Module, ResNetBackbone, SpatiotemporalFrontend,
                 TemporalAttention, TemporalConvBackend, resnet1d_audio, resnet2d_per_timestep)

MODALITIES = ("audio", "video")

_PROFILES = {
    "tiny": dict(timesteps=7, height=24, width=24, audio_length=1024, gru_units=32,
                 frontend_channels=8, video_widths=(8, 16, 32, 64), audio_widths=(8, 16, 32, 64)),
    "paper": dict(timesteps=29, height=96, width=96, audio_length=18560, gru_units=1024,
                  frontend_channels=64, video_widths=(64, 128, 256, 512),
                  audio_widths=(64, 128, 256, 512)),
}


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 10
    timesteps: int = 7
    height: int = 24
    width: int = 24
    audio_length: int = 1024
    video_depth: int = 18
    audio_depth: int = 18
    gru_units: int = 32
    attention_video: bool = True
    attention_audio: bool = True
    attention_combined: bool = True
    profile: str = "tiny"
    frontend_channels: int = 8
    video_widths: tuple[int, ...] = (8, 16, 32, 64)
    audio_widths: tuple[int, ...] = (8, 16, 32, 64)
    audio_stem_kernel: int = 80
    audio_stem_stride: int = 4

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.timesteps < 1:
            raise ConfigError("timesteps must be at least 1")
        if self.profile not in _PROFILES and self.profile != "custom":
            raise ConfigError(f"unknown profile {self.profile!r}")
        fixed = _PROFILES.get(self.profile, {})
        for key in ("timesteps", "gru_units"):
            if key in fixed and getattr(self, key) != fixed[key]:
                raise ConfigError(f"{self.profile} profile fixes {key}={fixed[key]}")
        for key in ("video_depth", "audio_depth"):
            if getattr(self, key) not in (18, 34):
                raise ConfigError(f"{key} must be 18 or 34")
        if self.audio_length < self.timesteps:
            raise ConfigError("audio_length must be at least timesteps")

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        return cls(**{**_PROFILES["tiny"], "profile": "tiny", **overrides})

    @classmethod
    def paper(cls, **overrides) -> "ModelConfig":
        return cls(**{**_PROFILES["paper"], "profile": "paper", **overrides})

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def attention_for(self, site: str) -> bool:
        return getattr(self, f"attention_{site}")

    def canonical(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(map(str, v))
            elif isinstance(v, bool):
                v = "on" if v else "off"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines)

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()

    def as_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, *tags: str) -> np.random.Generator:
    key = [int.from_bytes(hashlib.sha256(t.encode()).digest()[:4], "little") for t in tags]
    return np.random.default_rng([seed, *key])


class StreamModel(Module):
    """Single-modality model.

    Pipeline: encoder -> 2-layer BGRU -> optional attention gate -> per-timestep
    classifier. With ``head == "tcn"`` the BGRU is bypassed and the temporal
    convolutional back-end produces one logit vector per clip; the attention
    gate then acts on the encoder output instead.
    """

    def __init__(self, modality: str, cfg: ModelConfig, seed: int = 0, headless: bool = False):
        if modality not in MODALITIES:
            raise ConfigError(f"unknown modality {modality!r}")
        self.modality = modality
        self.cfg = cfg
        self.head = "bgru"
        rng = _rng(seed, "stream", modality)
        if modality == "video":
            self.frontend = SpatiotemporalFrontend(cfg.frontend_channels, rng=rng)
            self.backbone = ResNetBackbone(2, cfg.video_depth, cfg.frontend_channels,
                                           cfg.video_widths, rng=rng, first_stride=2)
        else:
            self.backbone = ResNetBackbone(1, cfg.audio_depth, 1, cfg.audio_widths, rng=rng,
                                           stem_kernel=cfg.audio_stem_kernel,
                                           stem_stride=cfg.audio_stem_stride)
        self.bgru = BGRU(self.backbone.out_features, cfg.gru_units, 2, rng=rng)
        if cfg.attention_for(modality):
            self.attention = TemporalAttention(cfg.timesteps, modality)
        if not headless:
            self.backend = TemporalConvBackend(self.backbone.out_features, cfg.num_classes, rng=rng)
            self.classifier = Classifier(self.bgru.out_features, cfg.num_classes, rng=rng)

    @property
    def feature_width(self) -> int:
        return self.bgru.out_features

    def check_input(self, x: Tensor) -> None:
        cfg = self.cfg
        if self.modality == "video":
            want = (1, cfg.timesteps, cfg.height, cfg.width)
            if x.ndim != 5 or x.shape[1:] != want:
                raise ShapeError(f"video stream expects [B,1,{cfg.timesteps},{cfg.height},{cfg.width}], got {x.shape}")
        elif x.ndim != 3 or x.shape[1:] != (1, cfg.audio_length):
            raise ShapeError(f"audio stream expects [B,1,{cfg.audio_length}], got {x.shape}")

    def encode(self, x: Tensor) -> Tensor:
        """Raw input -> [B, T, F] backbone features."""
        self.check_input(x)
        if self.modality == "video":
            return resnet2d_per_timestep(self.frontend(x), self.backbone)
        return resnet1d_audio(x, self.backbone, self.cfg.timesteps)

    def gate(self, seq: Tensor) -> Tensor:
        return self.attention(seq) if hasattr(self, "attention") else seq

    def features_from_encoding(self, enc: Tensor) -> Tensor:
        return self.gate(self.bgru(enc))

    def logits_from_encoding(self, enc: Tensor) -> Tensor:
        if self.head == "tcn":
            return ad.reshape(self.backend(self.gate(enc)), (enc.shape[0], 1, self.cfg.num_classes))
        return self.classifier.logits(self.features_from_encoding(enc))

    def features(self, x: Tensor) -> Tensor:
        """[B, T, 2H] post-attention features (the fused model's inputs)."""
        return self.features_from_encoding(self.encode(x))

    def logits(self, x: Tensor) -> Tensor:
        return self.logits_from_encoding(self.encode(x))

    def forward(self, x: Tensor) -> Tensor:
        """Per-timestep class probabilities, [B, T, C] ([B, 1, C] with the tcn head)."""
        return ad.softmax(self.logits(x), axis=-1)


class FusedModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.video = StreamModel("video", cfg, seed, headless=True)
        self.audio = StreamModel("audio", cfg, seed, headless=True)
        rng = _rng(seed, "fusion")
        width = self.video.feature_width + self.audio.feature_width
        self.fusion = BGRU(width, cfg.gru_units, 2, rng=rng)
        if cfg.attention_combined:
            self.attention = TemporalAttention(cfg.timesteps, "combined")
        self.classifier = Classifier(self.fusion.out_features, cfg.num_classes, rng=rng)

    modality = "fused"

    def fuse(self, video_feats: Tensor, audio_feats: Tensor) -> Tensor:
        if video_feats.shape[:2] != audio_feats.shape[:2]:
            raise ShapeError(f"stream features disagree on [B, T]: {video_feats.shape} vs {audio_feats.shape}")
        joint = self.fusion(ad.concat([video_feats, audio_feats], axis=2))
        if hasattr(self, "attention"):
            joint = self.attention(joint)
        return self.classifier.logits(joint)

    def logits_from_encoding(self, video_enc: Tensor, audio_enc: Tensor) -> Tensor:
        return self.fuse(self.video.features_from_encoding(video_enc),
                         self.audio.features_from_encoding(audio_enc))

    def logits(self, video: Tensor, waveform: Tensor) -> Tensor:
        if video.shape[0] != waveform.shape[0]:
            raise ShapeError(f"batch sizes differ: video {video.shape[0]} vs audio {waveform.shape[0]}")
        return self.fuse(self.video.features(video), self.audio.features(waveform))

    def forward(self, video: Tensor, waveform: Tensor) -> Tensor:
        return ad.softmax(self.logits(video, waveform), axis=-1)


def stream_forward(model: StreamModel, x: Tensor) -> Tensor:
    return model(x)


def stream_features(model: StreamModel, x: Tensor) -> Tensor:
    return model.features(x)


def fused_forward(model: FusedModel, video: Tensor, waveform: Tensor) -> Tensor:
    return model(video, waveform)


def build_model(kind: str, cfg: ModelConfig, seed: int = 0):
    if kind == "fused":
        return FusedModel(cfg, seed)
    return StreamModel(kind, cfg, seed)


def classify_sequence(probs, atol: float = 1e-6) -> tuple[int, float]:
    """Label a clip by the class with the highest mean per-timestep probability.

    Ties go to the lowest class index.
    """
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs, dtype=float)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ProbabilityError(f"expected a [T, C] probability grid, got shape {p.shape}")
    if (p < -atol).any() or (p > 1 + atol).any() or np.abs(p.sum(axis=1) - 1.0).max() > atol:
        raise ProbabilityError("rows must be probability vectors summing to 1")
    avg = p.mean(axis=0)
    label = int(np.argmax(avg))
    return label, float(avg[label])


def attention_param_names(model: Module) -> list[str]:
    return [n for n, _ in model.named_parameters() if n.endswith("attention.raw")]


STREAM_HEAD_PREFIXES = ("backend.", "classifier.")


def init_fused_from_streams(audio_ckpt, video_ckpt, cfg: ModelConfig, seed: int = 0) -> FusedModel:
    """Build a fused model whose stream branches copy the given stream checkpoints.

    Stream classifier and temporal back-end entries are ignored; the fusion
    BGRU, combined attention and classifier keep their fresh initialisation.
    """
    model = FusedModel(cfg, seed)
    for modality, ckpt in (("audio", audio_ckpt), ("video", video_ckpt)):
        branch = getattr(model, modality)
        state = {k: v for k, v in ckpt.entries.items() if not k.startswith(STREAM_HEAD_PREFIXES)}
        targets = dict(branch.named_parameters())
        targets.update(branch.named_buffers())
        missing = sorted(set(targets) - set(state))
        if missing:
            raise CheckpointError(f"{modality} checkpoint lacks {len(missing)} entries, e.g. {missing[:3]}")
        extra = sorted(set(state) - set(targets))
        if extra:
            raise CheckpointError(f"{modality} checkpoint has entries unknown to this config, e.g. {extra[:3]}")
        for name, dst in targets.items():
            arr = dst.data if isinstance(dst, Tensor) else dst
            src = state[name]
            if src.shape != arr.shape:
                raise CheckpointError(f"{modality}.{name}: checkpoint shape {src.shape} != model shape {arr.shape}")
            arr[...] = src
    return model
