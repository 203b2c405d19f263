"""Dataset manifests, LRW-layout ingestion and clip loading.

Directory layout::

    root/<WORD>/<split>/<stem>.frames
    root/<WORD>/<split>/<stem>.wav16k

Clip ids are ``<WORD>/<split>/<stem>`` so they stay unique across splits.
The persisted manifest (``manifest.tsv``) is UTF-8 text: ``#`` header lines
carrying the extents and class names, then one ``id<TAB>relpath<TAB>label``
line per clip.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import BoundsError, EmptyDatasetError, IngestionError
from .formats import SAMPLE_RATE, read_frames, read_frames_header, read_wav, read_wav_header

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.tsv"
FRAMES_EXT = ".frames"
AUDIO_EXT = ".wav16k"


@dataclass(frozen=True)
class Rect:
    top: int
    left: int
    height: int
    width: int


@dataclass(frozen=True)
class ClipRecord:
    id: str
    path: str  # relative, without extension
    label: int

    @property
    def split(self) -> str:
        return self.path.split("/")[1]


@dataclass
class Clip:
    frames: np.ndarray
    waveform: np.ndarray
    label: int
    id: str


@dataclass
class DatasetManifest:
    root: Path
    records: list[ClipRecord]
    class_names: list[str]
    timesteps: int
    height: int
    width: int
    audio_length: int
    split: str | None = None
    roi: Rect | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def extents(self) -> tuple[int, int, int, int, int]:
        return self.timesteps, self.height, self.width, self.audio_length, self.num_classes

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def subset(self, split: str) -> "DatasetManifest":
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        recs = [r for r in self.records if r.split == split]
        return replace(self, records=recs, split=split, _cache={})

    def load_clip(self, rec: ClipRecord) -> Clip:
        frames = read_frames(self.root / (rec.path + FRAMES_EXT))
        if self.roi is not None:
            frames = np.stack([extract_mouth_roi(f, self.roi) for f in frames])
        wave = read_wav(self.root / (rec.path + AUDIO_EXT))
        return Clip(frames, wave, rec.label, rec.id)

    def load(self) -> "ClipSet":
        """Decode every clip of this manifest into memory (cached)."""
        if "clips" not in self._cache:
            if not self.records:
                raise EmptyDatasetError(f"manifest split {self.split!r} has no clips")
            clips = [self.load_clip(r) for r in self.records]
            self._cache["clips"] = ClipSet(
                ids=[c.id for c in clips],
                frames=np.stack([c.frames for c in clips]),
                waves=np.stack([c.waveform for c in clips]),
                labels=np.array([c.label for c in clips], dtype=np.int64),
                split=self.split,
                num_classes=self.num_classes,
            )
        return self._cache["clips"]

    def write(self, path=None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        lines = [
            "# avsr-manifest 1",
            f"# T={self.timesteps} H={self.height} W={self.width} L={self.audio_length} C={self.num_classes}",
            "# classes=" + ",".join(self.class_names),
        ]
        lines += [f"{r.id}\t{r.path}\t{r.label}" for r in self.records]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


@dataclass
class ClipSet:
    """Decoded clips of one split, stacked for batching."""

    ids: list[str]
    frames: np.ndarray  # [N, T, H, W] float32 in [0, 1]
    waves: np.ndarray  # [N, L] float32 in [-1, 1]
    labels: np.ndarray  # [N] int64
    split: str | None
    num_classes: int

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, idx) -> "ClipSet":
        idx = np.asarray(idx, dtype=np.int64)
        return ClipSet([self.ids[i] for i in idx], self.frames[idx], self.waves[idx],
                       self.labels[idx], self.split, self.num_classes)


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read manifest {path}: {exc}") from None
    header: dict[str, str] = {}
    classes: list[str] = []
    records: list[ClipRecord] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("classes="):
                classes = [c for c in body[len("classes="):].split(",") if c]
            elif "=" in body:
                header.update(kv.split("=", 1) for kv in body.split())
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise IngestionError(f"{path}:{lineno}: expected id, path, label")
        records.append(ClipRecord(parts[0], parts[1], int(parts[2])))
    try:
        t, h, w, length, c = (int(header[k]) for k in ("T", "H", "W", "L", "C"))
    except KeyError as exc:
        raise IngestionError(f"{path}: header lacks {exc}") from None
    if len(classes) != c:
        raise IngestionError(f"{path}: header declares C={c} but lists {len(classes)} classes")
    return DatasetManifest(path.parent, records, classes, t, h, w, length)


def extract_mouth_roi(frame: np.ndarray, rect: Rect) -> np.ndarray:
    """Crop a fixed rectangle; no resampling."""
    h0, w0 = frame.shape
    if (rect.top < 0 or rect.left < 0 or rect.height <= 0 or rect.width <= 0
            or rect.top + rect.height > h0 or rect.left + rect.width > w0):
        raise BoundsError(f"rect {rect} lies outside a {h0}x{w0} frame")
    return frame[rect.top:rect.top + rect.height, rect.left:rect.left + rect.width].copy()


def load_lrw_layout(root, timesteps: int = 29, audio_length: int | None = None,
                    roi: Rect | None = None, sample_rate: int = SAMPLE_RATE) -> DatasetManifest:
    """Scan ``root/<WORD>/<split>/`` and validate every clip pair.

    Words are sorted, so class indices and record order are stable across
    scans. Any problem is collected and reported together.
    """
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(f"dataset root {root} is not a directory")
    words = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not words:
        raise IngestionError(f"no word directories under {root}")
    records: list[ClipRecord] = []
    problems: list[str] = []
    sizes: dict[str, tuple] = {}
    for label, word in enumerate(words):
        for split in SPLITS:
            d = root / word / split
            if not d.is_dir():
                continue
            stems = sorted({p.name[: -len(ext)] for ext in (FRAMES_EXT, AUDIO_EXT)
                            for p in d.glob("*" + ext)})
            for stem in stems:
                rel = f"{word}/{split}/{stem}"
                fpath, apath = d / (stem + FRAMES_EXT), d / (stem + AUDIO_EXT)
                if not fpath.exists() or not apath.exists():
                    problems.append(f"{rel} (missing {'frames' if not fpath.exists() else 'audio'})")
                    continue
                try:
                    t, h, w = read_frames_header(fpath)
                    ch, width, rate, n = read_wav_header(apath)
                except IngestionError:
                    problems.append(f"{rel} (undecodable)")
                    continue
                if t != timesteps:
                    problems.append(f"{rel} ({t} frames, expected {timesteps})")
                    continue
                if (ch, width, rate) != (1, 2, sample_rate):
                    problems.append(f"{rel} (audio must be 16-bit mono at {sample_rate} Hz)")
                    continue
                if audio_length is not None and n != audio_length:
                    problems.append(f"{rel} ({n} samples, expected {audio_length})")
                    continue
                sizes.setdefault("hw", (h, w))
                sizes.setdefault("n", n)
                if (h, w) != sizes["hw"] or n != sizes["n"]:
                    problems.append(f"{rel} (extents differ from the rest of the dataset)")
                    continue
                records.append(ClipRecord(rel, rel, label))
    if problems:
        raise IngestionError("invalid clips", problems)
    if not records:
        raise IngestionError(f"no clips found under {root}")
    h, w = sizes["hw"]
    if roi is not None:
        if roi.top + roi.height > h or roi.left + roi.width > w:
            raise BoundsError(f"roi {roi} lies outside the {h}x{w} frames")
        h, w = roi.height, roi.width
    return DatasetManifest(root, records, words, timesteps, h, w, sizes["n"], roi=roi)
