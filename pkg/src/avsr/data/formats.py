"""On-disk clip formats.

``.frames``: 16-byte header (b"AVFR", u16 T, u16 H, u16 W, 6 zero bytes) then
T*H*W little-endian float32 pixels in row-major order.

``.wav16k``: 16-bit PCM mono RIFF/WAVE at 16 kHz.
"""
from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from ..errors import IngestionError

FRAMES_MAGIC = b"AVFR"
_FRAMES_HEADER = struct.Struct("<4sHHH6x")
SAMPLE_RATE = 16000


def write_frames(path, frames: np.ndarray) -> None:
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise ValueError(f"frames must be [T, H, W], got {frames.shape}")
    t, h, w = frames.shape
    with open(path, "wb") as fh:
        fh.write(_FRAMES_HEADER.pack(FRAMES_MAGIC, t, h, w))
        fh.write(np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_frames_header(path) -> tuple[int, int, int]:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_FRAMES_HEADER.size)
    if len(head) != _FRAMES_HEADER.size:
        raise IngestionError("truncated frame header", [str(path)])
    magic, t, h, w = _FRAMES_HEADER.unpack(head)
    if magic != FRAMES_MAGIC:
        raise IngestionError("bad frame-file magic", [str(path)])
    if path.stat().st_size != _FRAMES_HEADER.size + 4 * t * h * w:
        raise IngestionError("frame payload size does not match header", [str(path)])
    return t, h, w


def read_frames(path) -> np.ndarray:
    t, h, w = read_frames_header(path)
    raw = Path(path).read_bytes()[_FRAMES_HEADER.size:]
    return np.frombuffer(raw, dtype="<f4").reshape(t, h, w).astype(np.float32)


def write_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    pcm = np.round(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def read_wav_header(path) -> tuple[int, int, int, int]:
    """(channels, sample width in bytes, sample rate, sample count)."""
    try:
        with wave.open(str(path), "rb") as wf:
            return wf.getnchannels(), wf.getsampwidth(), wf.getframerate(), wf.getnframes()
    except (wave.Error, EOFError) as exc:
        raise IngestionError(f"undecodable wav ({exc})", [str(path)]) from None


def read_wav(path) -> np.ndarray:
    """16-bit mono 16 kHz PCM as float32 in [-1, 1]; other encodings are rejected."""
    ch, width, rate, _ = read_wav_header(path)
    if (ch, width, rate) != (1, 2, SAMPLE_RATE):
        raise IngestionError(f"expected 16-bit mono {SAMPLE_RATE} Hz audio, got {ch} ch, "
                             f"{8 * width}-bit, {rate} Hz", [str(path)])
    with wave.open(str(path), "rb") as wf:
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32767.0
