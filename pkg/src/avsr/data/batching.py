"""Seeded mini-batch iteration."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import EmptyDatasetError
from .augment import AugmentConfig, augment_audio, augment_video
from .manifest import ClipSet, DatasetManifest


@dataclass
class Batch:
    video: np.ndarray  # [B, T, H, W]
    audio: np.ndarray  # [B, L]
    labels: np.ndarray  # [B]
    ids: list[str]
    index: np.ndarray  # positions in the source ClipSet


def epoch_order(n: int, shuffle_seed: int | None, epoch: int = 0) -> np.ndarray:
    if shuffle_seed is None:
        return np.arange(n)
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n)


def batch_iter(data: ClipSet | DatasetManifest, batch_size: int, shuffle_seed: int | None = 0,
               augment: AugmentConfig | None = None, epoch: int = 0) -> Iterator[Batch]:
    """Yield batches in a seeded permutation; the last batch may be short.

    Augmentation is applied per clip and only on the train split.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    clips = data.load() if isinstance(data, DatasetManifest) else data
    n = len(clips)
    if n == 0:
        raise EmptyDatasetError("cannot iterate an empty dataset")
    order = epoch_order(n, shuffle_seed, epoch)
    active = augment is not None and augment.enabled and clips.split == "train"
    aug_rng = np.random.default_rng([shuffle_seed or 0, epoch, 0xA06])
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        video = clips.frames[idx].astype(np.float64)
        audio = clips.waves[idx].astype(np.float64)
        if active:
            for j in range(len(idx)):
                video[j] = augment_video(video[j], augment, aug_rng)
                audio[j] = augment_audio(audio[j], augment.audio_noise_std, aug_rng)
        yield Batch(video, audio, clips.labels[idx], [clips.ids[i] for i in idx], idx)
