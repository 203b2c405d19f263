"""Training-time augmentation.

Video: with probability ``prob`` a clip is either flipped horizontally or
randomly cropped and reflect-padded back to its original size. The same
transform applies to every frame of the clip. Audio: additive Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = False
    prob: float = 0.5
    crop_margin: int = 2
    audio_noise_std: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise DataError("augmentation probability must lie in [0, 1]")
        if self.crop_margin < 0 or self.audio_noise_std < 0:
            raise DataError("crop margin and audio noise must be non-negative")

    def validate_for(self, height: int, width: int) -> None:
        if self.crop_margin >= min(height, width) / 2:
            raise DataError(f"crop margin {self.crop_margin} too large for {height}x{width} frames")


def flip_frames(frames: np.ndarray) -> np.ndarray:
    return frames[..., ::-1].copy()


def crop_frames(frames: np.ndarray, margin: int, offset: tuple[int, int]) -> np.ndarray:
    """Crop an (H-margin, W-margin) window at ``offset`` and reflect-pad it back."""
    if margin == 0:
        return frames.copy()
    _, h, w = frames.shape
    oy, ox = offset
    if not (0 <= oy <= margin and 0 <= ox <= margin):
        raise DataError(f"crop offset {offset} outside [0, {margin}]")
    window = frames[:, oy:oy + h - margin, ox:ox + w - margin]
    lo, hi = margin // 2, margin - margin // 2
    return np.pad(window, ((0, 0), (lo, hi), (lo, hi)), mode="reflect")


def augment_video(frames: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator,
                  force: str | None = None, offset: tuple[int, int] | None = None) -> np.ndarray:
    """``force`` ('flip' or 'crop') bypasses the coin flip; used by tests."""
    if not cfg.enabled and force is None:
        return frames
    if force is None:
        if rng.random() >= cfg.prob:
            return frames
        force = "flip" if rng.integers(2) == 0 else "crop"
    if force == "flip":
        out = flip_frames(frames)
    elif force == "crop":
        cfg.validate_for(*frames.shape[1:])
        if offset is None:
            offset = tuple(int(v) for v in rng.integers(0, cfg.crop_margin + 1, size=2))
        out = crop_frames(frames, cfg.crop_margin, offset)
    else:
        raise ValueError(f"unknown video transform {force!r}")
    return np.clip(out, 0.0, 1.0)


def augment_audio(waveform: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma < 0:
        raise DataError("audio noise stddev must be non-negative")
    if sigma == 0:
        return waveform.copy()
    return waveform + rng.normal(0.0, sigma, size=waveform.shape)
