"""Staged training protocols and evaluation.

Stream protocol (``train_stream``):
  1. encoder + attention + temporal-conv back-end, early stopping on val accuracy;
  2. BGRU head (BGRU + classifier) for a fixed number of epochs, encoder and
     attention frozen;
  3. everything end to end with early stopping.

Fused protocol (``train_fused``):
  A. fusion BGRU + combined attention + classifier, both streams frozen;
  B. everything end to end with step-decayed learning rates and early stopping.

Frozen modules run in eval mode, so their batchnorm statistics stay fixed as
well. When nothing upstream of the trainable part can change (frozen and no
augmentation) its output is computed once per clip and reused across epochs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor, no_grad
from ..data import AugmentConfig, ClipSet, DatasetManifest, batch_iter
from ..errors import CheckpointError, EmptyDatasetError, NumericalError, TrainingError
from ..models import FusedModel, ModelConfig, StreamModel, init_fused_from_streams
from .checkpoint import Checkpoint
from .optim import Adam, EarlyStop, LRSchedule, clip_grad_norm, make_param_groups

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 16
    lr: float = 1e-4
    attention_lr: float = 2e-4
    schedule: str = "step"
    decay_factor: float = 0.5
    decay_period: int = 10
    patience: int = 5
    stage1_max_epochs: int = 10
    stage2_epochs: int = 5
    stage3_max_epochs: int = 10
    fused_frozen_epochs: int = 5
    fused_max_epochs: int = 10
    clip_norm: float | None = 5.0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    eval_batch_size: int = 50

    @classmethod
    def paper(cls, **overrides) -> "TrainConfig":
        return cls(**{"batch_size": 32, "stage1_max_epochs": 1000, "stage3_max_epochs": 1000,
                      "fused_max_epochs": 1000, **overrides})

    @classmethod
    def tiny(cls, **overrides) -> "TrainConfig":
        return cls(**{"batch_size": 16, **overrides})

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def lr_schedule(self) -> LRSchedule:
        return LRSchedule(self.schedule, self.decay_factor, self.decay_period)


@dataclass(frozen=True)
class MetricRow:
    stage: str
    epoch: int
    split: str
    loss: float
    accuracy: float
    lr: float

    def line(self) -> str:
        return (f"{self.stage}\t{self.epoch}\t{self.split}\t{self.loss:.6f}\t"
                f"{self.accuracy:.4f}\t{self.lr:.6g}")


@dataclass
class EvalResult:
    accuracy: float
    per_class: list[float]
    confusion: np.ndarray  # [true, predicted] counts
    loss: float = float("nan")

    def summary(self) -> str:
        lines = [f"accuracy {self.accuracy:.4f} over {int(self.confusion.sum())} clips"]
        lines += [f"  class {c}: {a:.4f}" for c, a in enumerate(self.per_class)]
        return "\n".join(lines)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    model: object
    log: list[MetricRow]
    audits: dict[str, bool] = field(default_factory=dict)
    stage_checkpoints: dict[str, Checkpoint] = field(default_factory=dict)

    def log_lines(self) -> list[str]:
        return [r.line() for r in self.log]


# -- helpers ------------------------------------------------------------------

def _video_tensor(v: np.ndarray) -> Tensor:
    return Tensor(v[:, None])


def _audio_tensor(a: np.ndarray) -> Tensor:
    return Tensor(a[:, None])


def _clip_labels_from_probs(probs: np.ndarray) -> np.ndarray:
    """Vectorised highest-average-probability labelling (ties -> lowest index)."""
    return probs.mean(axis=1).argmax(axis=1)


def _sequence_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    b, t, c = logits.shape
    return ad.cross_entropy(ad.reshape(logits, (b * t, c)), np.repeat(labels, t))


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def confusion_result(pred: np.ndarray, labels: np.ndarray, num_classes: int,
                     loss: float = float("nan")) -> EvalResult:
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (labels, pred), 1)
    support = conf.sum(axis=1)
    per_class = [float(conf[c, c] / support[c]) if support[c] else float("nan") for c in range(num_classes)]
    return EvalResult(float((pred == labels).mean()), per_class, conf, loss)


class _Runner:
    """Computes logits for a batch, optionally reusing a frozen prefix.

    ``prefix(batch) -> tuple[Tensor, ...]`` maps raw inputs to the inputs of
    ``head``. If ``cacheable``, prefix outputs are computed once per clip (in
    eval mode) and looked up by clip index afterwards.
    """

    def __init__(self, prefix: Callable, head: Callable, cacheable: bool):
        self.prefix = prefix
        self.head = head
        self.cacheable = cacheable
        self._cache: dict[int, list[np.ndarray]] = {}

    def _cached(self, clips: ClipSet, bs: int) -> list[np.ndarray]:
        key = id(clips)
        if key not in self._cache:
            parts: list[list[np.ndarray]] = []
            with no_grad():
                for batch in batch_iter(clips, bs, shuffle_seed=None):
                    parts.append([t.data for t in self.prefix(batch)])
            self._cache[key] = [np.concatenate(col) for col in zip(*parts)]
        return self._cache[key]

    def logits(self, batch, clips: ClipSet, bs: int) -> Tensor:
        if self.cacheable:
            cached = self._cached(clips, bs)
            inputs = tuple(Tensor(arr[batch.index]) for arr in cached)
        else:
            inputs = self.prefix(batch)
        return self.head(*inputs)


def _stream_runner(model: StreamModel, cache_encoder: bool) -> _Runner:
    def prefix(batch):
        x = _video_tensor(batch.video) if model.modality == "video" else _audio_tensor(batch.audio)
        return (model.encode(x),)

    return _Runner(prefix, model.logits_from_encoding, cache_encoder)


def _fused_runner(model: FusedModel, cache_streams: bool) -> _Runner:
    def prefix(batch):
        return (model.video.features(_video_tensor(batch.video)),
                model.audio.features(_audio_tensor(batch.audio)))

    return _Runner(prefix, model.fuse, cache_streams)


def _evaluate_runner(runner: _Runner, model, clips: ClipSet, bs: int) -> EvalResult:
    model.eval()
    preds, losses, weights = [], [], []
    with no_grad():
        for batch in batch_iter(clips, bs, shuffle_seed=None):
            logits = runner.logits(batch, clips, bs)
            losses.append(_sequence_loss(logits, batch.labels).item())
            weights.append(len(batch.labels))
            preds.append(_clip_labels_from_probs(_softmax_np(logits.data)))
    loss = float(np.average(losses, weights=weights))
    return confusion_result(np.concatenate(preds), clips.labels, clips.num_classes, loss)


def evaluate(model, data: ClipSet | DatasetManifest, batch_size: int = 50) -> EvalResult:
    """Clip accuracy by highest average per-timestep probability; no augmentation."""
    clips = data.load() if isinstance(data, DatasetManifest) else data
    if len(clips) == 0:
        raise EmptyDatasetError("cannot evaluate an empty split")
    if clips.num_classes != model.cfg.num_classes:
        raise CheckpointError(f"model predicts {model.cfg.num_classes} classes, data has {clips.num_classes}")
    runner = (_fused_runner(model, False) if isinstance(model, FusedModel)
              else _stream_runner(model, False))
    return _evaluate_runner(runner, model, clips, batch_size)


def _set_modes(model, trainable_prefixes: tuple[str, ...]) -> None:
    """Train mode for modules under a trainable prefix, eval mode elsewhere."""
    model.eval()
    for name, val in _named_modules(model):
        if any(name == p.rstrip(".") or name.startswith(p) for p in trainable_prefixes):
            val.train(True)


def _named_modules(model, prefix: str = ""):
    from ..nn import Module

    for name, val in model._children():
        if isinstance(val, Module):
            yield prefix + name, val
            yield from _named_modules(val, f"{prefix}{name}.")
        elif isinstance(val, (list, tuple)):
            for i, item in enumerate(val):
                if isinstance(item, Module):
                    yield f"{prefix}{name}.{i}", item
                    yield from _named_modules(item, f"{prefix}{name}.{i}.")


def _freeze_except(model, trainable_prefixes: tuple[str, ...]) -> None:
    for name, p in model.named_parameters():
        p.requires_grad = name.startswith(trainable_prefixes)
    _set_modes(model, trainable_prefixes)


def _snapshot(model, exclude: tuple[str, ...]) -> dict[str, np.ndarray]:
    state = model.state_dict()
    return {k: v for k, v in state.items() if not k.startswith(exclude)}


def _unchanged(before: dict[str, np.ndarray], model) -> bool:
    after = model.state_dict()
    return all(np.array_equal(v, after[k]) for k, v in before.items())


def _run_phase(name: str, model, runner: _Runner, train: ClipSet, val: ClipSet,
               tcfg: TrainConfig, trainable: tuple[str, ...], epochs: int,
               early_stop: bool, epoch_offset: int, rows: list[MetricRow],
               decay: bool = False, keep_incoming: bool = False) -> int:
    """Train one stage; returns the number of epochs run. Restores the best
    val-accuracy weights when ``early_stop`` is set.

    With ``keep_incoming`` the weights entering the stage compete as the best
    so far (epoch -1), so fine-tuning can never return a worse model than it
    started from.
    """
    _freeze_except(model, trainable)
    groups = make_param_groups(model.named_parameters(), tcfg.lr, tcfg.attention_lr)
    opt = Adam(groups)
    schedule = tcfg.lr_schedule() if decay else LRSchedule("constant")
    base_lrs = {g.name: g.lr for g in groups}
    params = [p for _, p in opt.named_params()]
    stopper = EarlyStop(tcfg.patience)
    best_state = None
    if early_stop and keep_incoming:
        stopper.best = _evaluate_runner(runner, model, val, tcfg.eval_batch_size).accuracy
        best_state = model.state_dict()
    run = 0
    for local in range(epochs):
        epoch = epoch_offset + local
        opt.set_lr({k: schedule(v, local) for k, v in base_lrs.items()})
        _set_modes(model, trainable)
        total, count, correct = 0.0, 0, 0
        for step, batch in enumerate(batch_iter(train, tcfg.batch_size, tcfg.seed, tcfg.augment, epoch)):
            try:
                logits = runner.logits(batch, train, tcfg.eval_batch_size)
                loss = _sequence_loss(logits, batch.labels)
                opt.zero_grad()
                ad.backward(loss)
            except NumericalError as exc:
                raise TrainingError(f"{name}: epoch {epoch} step {step}: {exc}") from exc
            if tcfg.clip_norm:
                clip_grad_norm(params, tcfg.clip_norm)
            opt.step()
            n = len(batch.labels)
            total += loss.item() * n
            count += n
            correct += int((_clip_labels_from_probs(_softmax_np(logits.data)) == batch.labels).sum())
        lr_now = groups[0].lr
        rows.append(MetricRow(name, epoch, "train", total / count, correct / count, lr_now))
        res = _evaluate_runner(runner, model, val, tcfg.eval_batch_size)
        rows.append(MetricRow(name, epoch, "val", res.loss, res.accuracy, lr_now))
        log.info("%s epoch %d: train loss %.4f acc %.4f | val loss %.4f acc %.4f",
                 name, epoch, total / count, correct / count, res.loss, res.accuracy)
        run += 1
        if early_stop:
            stop = stopper.update(local, res.accuracy)
            if stopper.improved_at(local):
                best_state = model.state_dict()
            if stop:
                break
    if early_stop and best_state is not None:
        model.load_state_dict(best_state)
    model.requires_grad_(True)
    model.train()
    return run


def _split_sets(data) -> tuple[ClipSet, ClipSet]:
    if isinstance(data, DatasetManifest):
        return data.subset("train").load(), data.subset("val").load()
    return data["train"], data["val"]


def train_stream(data, modality: str, cfg: ModelConfig, tcfg: TrainConfig,
                 out_dir=None) -> TrainResult:
    """Three-stage single-stream protocol; returns the final (best) checkpoint."""
    train, val = _split_sets(data)
    model = StreamModel(modality, cfg, seed=tcfg.seed)
    rows: list[MetricRow] = []
    audits: dict[str, bool] = {}
    stage_ckpts: dict[str, Checkpoint] = {}
    no_aug = not tcfg.augment.enabled
    encoder = ("frontend.", "backbone.")

    model.head = "tcn"
    trainable = encoder + ("attention.", "backend.")
    n = _run_phase("stage1", model, _stream_runner(model, False), train, val, tcfg, trainable,
                   tcfg.stage1_max_epochs, True, 0, rows)
    stage_ckpts["stage1"] = _boundary(model, rows, out_dir, f"{modality}_stage1.ckpt")

    model.head = "bgru"
    head = ("bgru.", "classifier.")
    before = _snapshot(model, head)
    n += _run_phase("stage2", model, _stream_runner(model, no_aug), train, val, tcfg, head,
                    tcfg.stage2_epochs, False, n, rows)
    audits["stage2_frozen_unchanged"] = _unchanged(before, model)
    stage_ckpts["stage2"] = _boundary(model, rows, out_dir, f"{modality}_stage2.ckpt")

    trainable = encoder + ("attention.", "bgru.", "classifier.")
    n += _run_phase("stage3", model, _stream_runner(model, False), train, val, tcfg, trainable,
                    tcfg.stage3_max_epochs, True, n, rows, keep_incoming=True)
    ckpt = _final_checkpoint(model, val, tcfg, n)
    if out_dir is not None:
        ckpt.save(Path(out_dir) / f"{modality}.ckpt")
    return TrainResult(ckpt, model, rows, audits, stage_ckpts)


def train_fused(data, audio_ckpt: Checkpoint, video_ckpt: Checkpoint, cfg: ModelConfig,
                tcfg: TrainConfig, out_dir=None) -> TrainResult:
    """Fusion protocol: frozen-stream warm-up, then end-to-end with step decay."""
    train, val = _split_sets(data)
    model = init_fused_from_streams(audio_ckpt, video_ckpt, cfg, seed=tcfg.seed)
    rows: list[MetricRow] = []
    audits: dict[str, bool] = {}
    new = ("fusion.", "attention.", "classifier.")
    before = _snapshot(model, new)
    n = _run_phase("phaseA", model, _fused_runner(model, not tcfg.augment.enabled), train, val,
                   tcfg, new, tcfg.fused_frozen_epochs, False, 0, rows)
    audits["phaseA_frozen_unchanged"] = _unchanged(before, model)
    stage_ckpts = {"phaseA": _boundary(model, rows, out_dir, "fused_phaseA.ckpt")}
    everything = ("video.", "audio.") + new
    n += _run_phase("phaseB", model, _fused_runner(model, False), train, val, tcfg, everything,
                    tcfg.fused_max_epochs, True, n, rows, decay=True, keep_incoming=True)
    ckpt = _final_checkpoint(model, val, tcfg, n)
    if out_dir is not None:
        ckpt.save(Path(out_dir) / "fused.ckpt")
    return TrainResult(ckpt, model, rows, audits, stage_ckpts)


def _boundary(model, rows: list[MetricRow], out_dir, filename: str) -> Checkpoint:
    last_val = next((r for r in reversed(rows) if r.split == "val"), None)
    ckpt = Checkpoint.from_model(model, last_val.epoch if last_val else 0,
                                 last_val.accuracy if last_val else 0.0)
    if out_dir is not None:
        ckpt.save(Path(out_dir) / filename)
    return ckpt


def _final_checkpoint(model, val: ClipSet, tcfg: TrainConfig, epochs: int) -> Checkpoint:
    res = evaluate(model, val, tcfg.eval_batch_size)
    return Checkpoint.from_model(model, epochs, res.accuracy)
