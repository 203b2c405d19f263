"""Versioned binary checkpoint.

Layout (all integers little-endian)::

    b"AVSRCKPT"  u32 version=1  u32 entry_count
    entry*:      u16 name_len, utf-8 name, u8 rank, u32 extents[rank], f32 data
    trailer:     u32 epoch, f32 metric, 32-byte config digest

Values are stored in single precision; models compute in double.
"""
from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, FormatError
from ..models import FusedModel, ModelConfig, StreamModel

MAGIC = b"AVSRCKPT"
VERSION = 1
_TRAILER = struct.Struct("<If32s")


@dataclass
class Checkpoint:
    entries: dict[str, np.ndarray]
    epoch: int = 0
    metric: float = 0.0
    digest: bytes = field(default=b"\0" * 32)

    @classmethod
    def from_model(cls, model, epoch: int = 0, metric: float = 0.0) -> "Checkpoint":
        entries = {name: arr.astype(np.float32) for name, arr in model.state_dict().items()}
        return cls(entries, int(epoch), float(metric), model.cfg.digest())

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        out.write(MAGIC)
        out.write(struct.pack("<II", VERSION, len(self.entries)))
        for name, arr in self.entries.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            out.write(struct.pack("<H", len(raw)))
            out.write(raw)
            out.write(struct.pack("<B", arr.ndim))
            out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            out.write(arr.tobytes())
        out.write(_TRAILER.pack(self.epoch, self.metric, self.digest))
        return out.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        view = memoryview(blob)
        pos = 0

        def take(n: int) -> memoryview:
            nonlocal pos
            if pos + n > len(view):
                raise FormatError("checkpoint is truncated")
            chunk = view[pos:pos + n]
            pos += n
            return chunk

        if bytes(take(8)) != MAGIC:
            raise FormatError("not a checkpoint (bad magic bytes)")
        version, count = struct.unpack("<II", take(8))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", take(2))
            try:
                name = bytes(take(nlen)).decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError("entry name is not valid utf-8") from exc
            (rank,) = struct.unpack("<B", take(1))
            shape = struct.unpack(f"<{rank}I", take(4 * rank))
            n = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
            if name in entries:
                raise FormatError(f"duplicate entry {name!r}")
            entries[name] = data
        epoch, metric, digest = _TRAILER.unpack(take(_TRAILER.size))
        if pos != len(view):
            raise FormatError("trailing bytes after checkpoint trailer")
        return cls(entries, epoch, metric, digest)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(self.to_bytes())
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())

    def kind(self) -> str:
        if any(k.startswith("fusion.") for k in self.entries):
            return "fused"
        if any(k.startswith("frontend.") for k in self.entries):
            return "video"
        return "audio"

    def parameter_count(self) -> int:
        return sum(a.size for a in self.entries.values())

    def apply_to(self, model) -> None:
        model.load_state_dict(self.entries)


def save_checkpoint(model, meta: dict | None, path) -> Path:
    meta = meta or {}
    ckpt = Checkpoint.from_model(model, meta.get("epoch", 0), meta.get("metric", 0.0))
    return ckpt.save(path)


def model_from_checkpoint(ckpt: Checkpoint, cfg: ModelConfig):
    if ckpt.digest != cfg.digest():
        raise CheckpointError("checkpoint was written for a different model config (digest mismatch)")
    kind = ckpt.kind()
    model = FusedModel(cfg) if kind == "fused" else StreamModel(kind, cfg)
    ckpt.apply_to(model)
    return model


def load_checkpoint(path, cfg: ModelConfig):
    return model_from_checkpoint(Checkpoint.load(path), cfg)
