"""Desk-scale experiments on synthetic data: training, attention and noise studies.

Shared by the acceptance tests and ``scripts/``. Everything here runs on the
tiny profile and finishes in minutes per model on one CPU core.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import SPLITS, AugmentConfig, ClipSet, SyntheticSpec, synthesize
from .models import ModelConfig
from .train import TrainConfig, TrainResult, evaluate, train_fused, train_stream

MODALITIES = ("audio", "video", "fused")

DESK_SPEC = SyntheticSpec(num_classes=10, train=2000, val=200, test=200, consistency=0.9, seed=0)


def desk_train_config(**overrides) -> TrainConfig:
    """Per-model epoch caps: streams 10 + 5 + 10, fused 5 + 10 (at most 25 each)."""
    base = dict(batch_size=16, lr=1e-4, attention_lr=2e-4, stage1_max_epochs=10, stage2_epochs=5,
                stage3_max_epochs=10, fused_frozen_epochs=5, fused_max_epochs=10)
    return TrainConfig.tiny(**{**base, **overrides})


def splits(spec: SyntheticSpec) -> dict[str, ClipSet]:
    return {s: synthesize(spec, s) for s in SPLITS}


@dataclass
class ModelRun:
    modality: str
    result: TrainResult
    seconds: float
    test_accuracy: float

    @property
    def epochs(self) -> int:
        return len({(r.stage, r.epoch) for r in self.result.log})

    def line(self) -> str:
        return (f"{self.modality:6s} test {self.test_accuracy:.4f}  epochs {self.epochs:2d}  "
                f"{self.seconds:6.1f}s")


@dataclass
class ModalityRuns:
    runs: dict[str, ModelRun] = field(default_factory=dict)

    def __getitem__(self, modality: str) -> ModelRun:
        return self.runs[modality]

    def accuracy(self, modality: str) -> float:
        return self.runs[modality].test_accuracy


def train_all(data: dict[str, ClipSet], cfg: ModelConfig, tcfg: TrainConfig,
              log=None) -> ModalityRuns:
    """Audio and video streams, then the fused model initialised from them."""
    out = ModalityRuns()
    for modality in MODALITIES:
        start = time.perf_counter()
        if modality == "fused":
            res = train_fused(data, out["audio"].result.checkpoint, out["video"].result.checkpoint,
                              cfg, tcfg)
        else:
            res = train_stream(data, modality, cfg, tcfg)
        seconds = time.perf_counter() - start
        acc = evaluate(res.model, data["test"], tcfg.eval_batch_size).accuracy
        out.runs[modality] = ModelRun(modality, res, seconds, acc)
        if log is not None:
            log(out.runs[modality].line())
    return out


def gate_values(model) -> dict[str, np.ndarray]:
    """sigmoid(raw) of every attention site in ``model``, keyed by parameter name."""
    return {name[: -len(".raw")] or "attention": 1.0 / (1.0 + np.exp(-p.data))
            for name, p in model.named_parameters() if name.endswith("attention.raw")}


def centre_heavy(gate: np.ndarray, mask: np.ndarray) -> bool:
    """Every signal-carrying step is gated higher than every distractor step."""
    return bool(gate[mask].min() > gate[~mask].max())


@dataclass
class AblationPair:
    """Same modality trained with and without a factor."""

    modality: str
    without: float
    with_: float

    @property
    def delta(self) -> float:
        return self.with_ - self.without


def attention_study(spec: SyntheticSpec, tcfg: TrainConfig, log=None) -> tuple[ModalityRuns, ModalityRuns]:
    """(attention off, attention on) runs on the same data."""
    data = splits(spec)
    base = ModelConfig.tiny()
    off = base.replace(attention_video=False, attention_audio=False, attention_combined=False)
    return train_all(data, off, tcfg, log), train_all(data, base, tcfg, log)


def noisy_test(spec: SyntheticSpec, test_noise_std: float) -> ClipSet:
    """Test split regenerated at a higher noise level; train and val are unchanged."""
    return synthesize(SyntheticSpec(**{**spec.__dict__, "test_noise_std": test_noise_std}), "test")


def with_augmentation(tcfg: TrainConfig, **overrides) -> TrainConfig:
    return tcfg.replace(augment=AugmentConfig(enabled=True, **overrides))
