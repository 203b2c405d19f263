"""Synthetic audio-visual word clips.

Each class owns a lip-aperture trajectory over the T timesteps and a tone
frequency. Video frames draw a centred dark ellipse whose height follows the
trajectory; the waveform is the class tone with its envelope following the
same trajectory.

Inconsistent clips (probability ``1 - consistency``) blend the true class with
a second class in each modality, using a different partner class for audio
and video. Each stream alone is then ambiguous between two classes while the
pair of streams pins down the label.

With ``signal_steps`` set, only the middle ``signal_steps`` timesteps carry
the label; the outer timesteps show a random distractor class, like
neighbouring words around a target word.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from .formats import SAMPLE_RATE, write_frames, write_wav
from .manifest import SPLITS, ClipRecord, ClipSet, DatasetManifest

_MIN_TRAJ_DIST = 0.3


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    train: int = 2000
    val: int = 200
    test: int = 200
    timesteps: int = 7
    height: int = 24
    width: int = 24
    audio_length: int = 1024
    consistency: float = 1.0
    noise_std: float = 0.1
    test_noise_std: float | None = None
    signal_steps: int | None = None
    freq_low: float = 500.0
    freq_high: float = 3500.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise DataError("need at least two classes")
        if not 0.0 <= self.consistency <= 1.0:
            raise DataError("consistency must lie in [0, 1]")
        if self.noise_std < 0 or (self.test_noise_std is not None and self.test_noise_std < 0):
            raise DataError("noise stddev must be non-negative")
        if self.signal_steps is not None and not 1 <= self.signal_steps <= self.timesteps:
            raise DataError("signal_steps must lie in [1, T]")
        if self.consistency < 1.0 and self.num_classes < 3:
            raise DataError("inconsistent clips need at least three classes")
        if min(self.height, self.width) < 7:
            raise DataError("frames must be at least 7x7")

    def count(self, split: str) -> int:
        return getattr(self, split)

    def noise_for(self, split: str) -> float:
        if split == "test" and self.test_noise_std is not None:
            return self.test_noise_std
        return self.noise_std

    def signal_mask(self) -> np.ndarray:
        mask = np.ones(self.timesteps, dtype=bool)
        if self.signal_steps is not None:
            start = (self.timesteps - self.signal_steps) // 2
            mask[:] = False
            mask[start:start + self.signal_steps] = True
        return mask


@dataclass(frozen=True)
class ClassSignatures:
    trajectories: np.ndarray  # [C, T] aperture in [0.2, 1]
    frequencies: np.ndarray  # [C] Hz


def class_signatures(spec: SyntheticSpec) -> ClassSignatures:
    """Draw pairwise-distinct trajectories (distinct on the signal window too)."""
    rng = np.random.default_rng([spec.seed, 0x5167])
    mask = spec.signal_mask()
    trajs: list[np.ndarray] = []
    attempts = 0
    while len(trajs) < spec.num_classes:
        attempts += 1
        if attempts > 100_000:
            raise DataError("could not draw distinct class trajectories")
        cand = rng.uniform(0.2, 1.0, size=spec.timesteps)
        if all(np.linalg.norm((cand - t)[mask]) >= _MIN_TRAJ_DIST for t in trajs):
            trajs.append(cand)
    freqs = np.linspace(spec.freq_low, spec.freq_high, spec.num_classes)
    return ClassSignatures(np.array(trajs), freqs)


def render_frames(traj: np.ndarray, height: int, width: int) -> np.ndarray:
    """One frame per trajectory value: dark ellipse (mouth) on a light background."""
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    a = 0.38 * width
    frames = np.empty((len(traj), height, width))
    for t, ap in enumerate(traj):
        b = max(0.5, ap * 0.4 * height)
        r = np.sqrt(((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2)
        inside = 1.0 / (1.0 + np.exp(-(1.0 - r) / 0.08))
        frames[t] = 0.8 - 0.6 * inside
    return frames


def render_tone(traj: np.ndarray, freq: float, length: int, phase: float,
                sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    n = np.arange(length)
    step = (n * len(traj)) // length
    return 0.6 * traj[step] * np.sin(2 * np.pi * freq * n / sample_rate + phase)


def _clip_sources(label: int, rng: np.random.Generator, spec: SyntheticSpec):
    """Per-timestep class weights for each modality: two [T, C] matrices."""
    c, t = spec.num_classes, spec.timesteps
    mask = spec.signal_mask()
    video = np.zeros((t, c))
    audio = np.zeros((t, c))
    inconsistent = rng.random() >= spec.consistency
    if inconsistent:
        others = rng.permutation([k for k in range(c) if k != label])[:2]
        video[mask, label] = audio[mask, label] = 0.5
        video[mask, others[0]] = 0.5
        audio[mask, others[1]] = 0.5
    else:
        video[mask, label] = audio[mask, label] = 1.0
    if not mask.all():
        distractor = rng.choice([k for k in range(c) if k != label])
        video[~mask, distractor] = audio[~mask, distractor] = 1.0
    return video, audio


def synthesize(spec: SyntheticSpec, split: str, sig: ClassSignatures | None = None) -> ClipSet:
    """Generate one split in memory; reproducible from ``spec.seed``."""
    sig = sig or class_signatures(spec)
    n, c, t = spec.count(split), spec.num_classes, spec.timesteps
    rng = np.random.default_rng([spec.seed, SPLITS.index(split) + 1])
    labels = rng.permutation(np.arange(n) % c)
    templates_v = np.stack([render_frames(tr, spec.height, spec.width) for tr in sig.trajectories])
    noise = spec.noise_for(split)
    frames = np.empty((n, t, spec.height, spec.width), dtype=np.float32)
    waves = np.empty((n, spec.audio_length), dtype=np.float32)
    step = (np.arange(spec.audio_length) * t) // spec.audio_length
    for i, label in enumerate(labels):
        wv, wa = _clip_sources(int(label), rng, spec)
        phases = rng.uniform(0, 2 * np.pi, size=c)
        # frame t = sum_k wv[t, k] * template_k[t]
        f = np.einsum("tk,kthw->thw", wv, templates_v)
        wave = np.zeros(spec.audio_length)
        for k in np.flatnonzero(wa.any(axis=0)):
            tone = render_tone(sig.trajectories[k], sig.frequencies[k], spec.audio_length, phases[k])
            wave += wa[step, k] * tone
        if noise > 0:
            f = f + rng.normal(0.0, noise, size=f.shape)
            wave = wave + rng.normal(0.0, noise, size=wave.shape)
        frames[i] = np.clip(f, 0.0, 1.0)
        waves[i] = np.clip(wave, -1.0, 1.0)
    ids = [f"{_word(label, c)}/{split}/{_word(label, c)}_{i:05d}" for i, label in enumerate(labels)]
    return ClipSet(ids, frames, waves, labels.astype(np.int64), split, c)


def _word(label: int, num_classes: int) -> str:
    return f"WORD{label:0{max(2, len(str(num_classes - 1)))}d}"


def generate_synthetic(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Materialise all splits in the LRW directory layout and write the manifest."""
    root = Path(out_dir)
    sig = class_signatures(spec)
    records: list[ClipRecord] = []
    try:
        root.mkdir(parents=True, exist_ok=True)
        for split in SPLITS:
            clips = synthesize(spec, split, sig)
            for i, cid in enumerate(clips.ids):
                d = root / cid.rsplit("/", 1)[0]
                d.mkdir(parents=True, exist_ok=True)
                write_frames(root / (cid + ".frames"), clips.frames[i])
                write_wav(root / (cid + ".wav16k"), clips.waves[i])
                records.append(ClipRecord(cid, cid, int(clips.labels[i])))
        names = [_word(k, spec.num_classes) for k in range(spec.num_classes)]
        manifest = DatasetManifest(root, records, names, spec.timesteps, spec.height,
                                   spec.width, spec.audio_length)
        manifest.write()
    except OSError as exc:
        raise DataError(f"cannot write synthetic dataset to {root}: {exc}") from exc
    return manifest


def template_classify(clips: ClipSet, spec: SyntheticSpec, modality: str) -> np.ndarray:
    """Nearest-template labels from one modality (noise-free templates).

    Video: nearest rendered template in pixel space. Audio: nearest template
    magnitude spectrum, which ignores the per-clip random phase.
    """
    sig = class_signatures(spec)
    if modality == "video":
        temps = np.stack([render_frames(tr, spec.height, spec.width) for tr in sig.trajectories])
        d = ((clips.frames[:, None].astype(float) - temps[None]) ** 2).sum(axis=(2, 3, 4))
        return d.argmin(axis=1)
    temps = np.stack([np.abs(np.fft.rfft(render_tone(tr, f, spec.audio_length, 0.0)))
                      for tr, f in zip(sig.trajectories, sig.frequencies)])
    spec_clips = np.abs(np.fft.rfft(clips.waves.astype(float), axis=1))
    d = ((spec_clips[:, None] - temps[None]) ** 2).sum(axis=2)
    return d.argmin(axis=1)
