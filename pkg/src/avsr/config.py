"""Experiment configuration files.

Format: UTF-8 lines of ``key = value``; ``#`` starts a comment; keys are
dotted paths. Unknown keys are errors. Example::

    seed = 3
    out_dir = runs/attention
    model.profile = tiny
    model.depth.video = 18
    model.attention.video = on
    train.lr = 1e-3
    train.augment = off
    data.synthetic.consistency = 0.9
    ablate.modality = audio, video, fused
    ablate.attention = off, on
"""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .data import AugmentConfig, SyntheticSpec
from .errors import ConfigError, DataError
from .models import ModelConfig
from .train import TrainConfig

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}
AXES = ("modality", "attention", "noise", "depth")
MODALITY_VALUES = ("audio", "video", "fused")


def parse_bool(text: str) -> bool:
    low = text.lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _coerce(text: str, hint):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if text.lower() == "none" and type(None) in args:
            return None
        (inner,) = [a for a in args if a is not type(None)]
        return _coerce(text, inner)
    if origin is tuple:
        return tuple(_coerce(item, args[0]) for item in _list(text))
    if hint is bool:
        return parse_bool(text)
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is str:
        return text
    raise ValueError(f"unsupported field type {hint!r}")


def _fields(cls) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if not f.name.startswith("_")}


_MODEL_ALIASES = {
    "depth.video": "video_depth",
    "depth.audio": "audio_depth",
    "attention.video": "attention_video",
    "attention.audio": "attention_audio",
    "attention.combined": "attention_combined",
}


def _key_table() -> dict[str, tuple[str, str, object]]:
    """dotted key -> (section, field name, type hint)."""
    table: dict[str, tuple[str, str, object]] = {}
    model = _fields(ModelConfig)
    for name, hint in model.items():
        table[f"model.{name}"] = ("model", name, hint)
    for alias, name in _MODEL_ALIASES.items():
        table[f"model.{alias}"] = ("model", name, model[name])
    for name, hint in _fields(TrainConfig).items():
        if name != "augment":
            table[f"train.{name}"] = ("train", name, hint)
    table["train.augment"] = ("augment", "enabled", bool)
    for name, hint in _fields(AugmentConfig).items():
        if name != "enabled":
            table[f"train.augment.{name}"] = ("augment", name, hint)
    for name, hint in _fields(SyntheticSpec).items():
        table[f"data.synthetic.{name}"] = ("synthetic", name, hint)
    table["data.manifest"] = ("top", "manifest", str)
    table["seed"] = ("train", "seed", int)
    table["out_dir"] = ("top", "out_dir", str)
    table["checkpoints.audio"] = ("ckpt", "audio", str)
    table["checkpoints.video"] = ("ckpt", "video", str)
    for axis in AXES:
        table[f"ablate.{axis}"] = ("axes", axis, str)
    return table


KEYS = _key_table()


@dataclass
class AblationAxes:
    modality: tuple[str, ...] = MODALITY_VALUES
    attention: tuple[bool, ...] = (False, True)
    noise: tuple[bool, ...] = (False,)
    depth: tuple[int, ...] = (18,)

    @classmethod
    def parse(cls, raw: dict[str, str]) -> "AblationAxes":
        axes = cls()
        try:
            if "modality" in raw:
                axes.modality = tuple(_list(raw["modality"]))
                bad = [m for m in axes.modality if m not in MODALITY_VALUES]
                if bad:
                    raise ValueError(f"unknown modality {bad[0]!r}")
            if "attention" in raw:
                axes.attention = tuple(parse_bool(v) for v in _list(raw["attention"]))
            if "noise" in raw:
                axes.noise = tuple(parse_bool(v) for v in _list(raw["noise"]))
            if "depth" in raw:
                axes.depth = tuple(int(v) for v in _list(raw["depth"]))
                if any(d not in (18, 34) for d in axes.depth):
                    raise ValueError("depth values must be 18 or 34")
        except ValueError as exc:
            raise ConfigError(f"ablate: {exc}") from exc
        for axis in AXES:
            values = getattr(axes, axis)
            if not values or len(set(values)) != len(values):
                raise ConfigError(f"ablate.{axis} must list distinct values")
        return axes


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig.tiny)
    train: TrainConfig = field(default_factory=TrainConfig.tiny)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    manifest: str | None = None
    out_dir: str = "runs/default"
    checkpoints: dict[str, str] = field(default_factory=dict)
    axes: AblationAxes = field(default_factory=AblationAxes)
    source: Path | None = None

    @property
    def seed(self) -> int:
        return self.train.seed

    def resolve(self, path: str) -> Path:
        """Paths in a config file are relative to the file's directory."""
        p = Path(path)
        if p.is_absolute() or self.source is None:
            return p
        return self.source.parent / p


def parse_lines(lines, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line number)``; duplicate and unknown keys are errors."""
    raw: dict[str, tuple[str, int]] = {}
    for num, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{num}: expected 'key = value'")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{num}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{num}: duplicate key {key!r}")
        raw[key] = (value, num)
    return raw


def build_config(raw: dict[str, tuple[str, int]], source: str = "<config>") -> ExperimentConfig:
    sections: dict[str, dict[str, object]] = {s: {} for s in
                                              ("model", "train", "augment", "synthetic", "top", "ckpt")}
    axes_raw: dict[str, str] = {}
    for key, (value, num) in raw.items():
        section, name, hint = KEYS[key]
        if section == "axes":
            axes_raw[name] = value
            continue
        try:
            sections[section][name] = _coerce(value, hint)
        except ValueError as exc:
            raise ConfigError(f"{source}:{num}: {key}: {exc}") from exc
    model_kw = sections["model"]
    profile = model_kw.pop("profile", "tiny")
    try:
        if profile == "tiny":
            model = ModelConfig.tiny(**model_kw)
            train_base = TrainConfig.tiny
        elif profile == "paper":
            model = ModelConfig.paper(**model_kw)
            train_base = TrainConfig.paper
        else:
            raise ConfigError(f"{source}: unknown model.profile {profile!r}")
        augment = AugmentConfig(**sections["augment"])
        train = train_base(augment=augment, **sections["train"])
        synthetic = SyntheticSpec(**sections["synthetic"])
    except (TypeError, ValueError, DataError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    top = sections["top"]
    return ExperimentConfig(model, train, synthetic, top.get("manifest"),
                            top.get("out_dir", "runs/default"), dict(sections["ckpt"]),
                            AblationAxes.parse(axes_raw))


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    cfg = build_config(parse_lines(text.splitlines(), str(p)), str(p))
    cfg.source = p
    return cfg


def parse_config_text(text: str) -> ExperimentConfig:
    return build_config(parse_lines(text.splitlines()))
