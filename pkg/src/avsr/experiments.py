"""Experiment orchestration shared by the CLI and the scripts.

Ablation cells are cached on disk under ``<out_dir>/cells`` keyed by a digest
of everything that determines the trained weights, so a cell shared between
tables (or between invocations) trains once.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import ExperimentConfig
from .data import ClipSet, SPLITS, read_manifest, synthesize
from .errors import CheckpointError, NumericalError
from .models import ModelConfig
from .report import Cell, ResultTable, build_tables
from .train import Checkpoint, TrainConfig, evaluate, model_from_checkpoint, train_fused, train_stream

log = logging.getLogger(__name__)


def load_splits(exp: ExperimentConfig) -> dict[str, ClipSet]:
    """All splits, from the configured manifest or generated in memory."""
    if exp.manifest:
        manifest = read_manifest(exp.resolve(exp.manifest))
        return {s: manifest.subset(s).load() for s in SPLITS}
    return {s: synthesize(exp.synthetic, s) for s in SPLITS}


def data_key(exp: ExperimentConfig) -> str:
    return f"manifest:{exp.resolve(exp.manifest).resolve()}" if exp.manifest else repr(exp.synthetic)


def cell_model(base: ModelConfig, cell: Cell) -> ModelConfig:
    return base.replace(attention_video=cell.attention, attention_audio=cell.attention,
                        attention_combined=cell.attention, video_depth=cell.depth,
                        audio_depth=cell.depth)


def cell_train(base: TrainConfig, cell: Cell) -> TrainConfig:
    return base.replace(augment=replace(base.augment, enabled=cell.noise))


def cell_key(cell: Cell, exp: ExperimentConfig) -> str:
    cfg = cell_model(exp.model, cell)
    blob = "\n".join([cell.modality, cfg.canonical(), repr(cell_train(exp.train, cell)), data_key(exp)])
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class CellOutcome:
    cell: Cell
    accuracy: float | None
    checkpoint: Checkpoint | None
    trained: bool  # False when served from the cache
    error: str = ""


@dataclass
class Ablation:
    exp: ExperimentConfig
    data: dict[str, ClipSet]
    outcomes: dict[Cell, CellOutcome] = field(default_factory=dict)
    runs: list[str] = field(default_factory=list)

    @property
    def cell_dir(self) -> Path:
        return Path(self.exp.out_dir) / "cells"

    def grid(self) -> list[Cell]:
        a = self.exp.axes
        return [Cell(m, att, noise, depth) for m, att, noise, depth in
                itertools.product(a.modality, a.attention, a.noise, a.depth)]

    def run(self) -> list[ResultTable]:
        for cell in self.grid():
            self.outcome(cell)
        results = {c: self.outcomes[c].accuracy for c in self.grid()}
        return build_tables(results, self.exp.axes.modality)

    def failed(self) -> list[CellOutcome]:
        return [o for c, o in self.outcomes.items() if c in set(self.grid()) and o.accuracy is None]

    def outcome(self, cell: Cell) -> CellOutcome:
        if cell in self.outcomes:
            return self.outcomes[cell]
        key = cell_key(cell, self.exp)
        ckpt_path = self.cell_dir / f"{cell.modality}-{key}.ckpt"
        meta_path = ckpt_path.with_suffix(".json")
        cached = self._load_cached(ckpt_path, meta_path)
        if cached is not None:
            out = CellOutcome(cell, cached[1], cached[0], trained=False)
        else:
            out = self._train(cell, ckpt_path, meta_path)
        self.outcomes[cell] = out
        return out

    def _load_cached(self, ckpt_path: Path, meta_path: Path):
        if not (ckpt_path.exists() and meta_path.exists()):
            return None
        try:
            meta = json.loads(meta_path.read_text())
            return Checkpoint.load(ckpt_path), float(meta["test_accuracy"])
        except (CheckpointError, OSError, ValueError, KeyError) as exc:
            log.warning("ignoring unreadable cached cell %s: %s", ckpt_path.name, exc)
            return None

    def _train(self, cell: Cell, ckpt_path: Path, meta_path: Path) -> CellOutcome:
        cfg = cell_model(self.exp.model, cell)
        tcfg = cell_train(self.exp.train, cell)
        log.info("training cell: %s", cell.label())
        try:
            if cell.modality == "fused":
                streams = [self.outcome(Cell(m, cell.attention, cell.noise, cell.depth))
                           for m in ("audio", "video")]
                broken = [s.cell.modality for s in streams if s.checkpoint is None]
                if broken:
                    return CellOutcome(cell, None, None, False, f"stream(s) failed: {', '.join(broken)}")
                result = train_fused(self.data, streams[0].checkpoint, streams[1].checkpoint, cfg, tcfg)
            else:
                result = train_stream(self.data, cell.modality, cfg, tcfg)
        except NumericalError as exc:
            log.error("cell %s failed: %s", cell.label(), exc)
            self.runs.append(f"run\t{cell.label()}\tfailed")
            return CellOutcome(cell, None, None, True, str(exc))
        acc = evaluate(result.model, self.data["test"], tcfg.eval_batch_size).accuracy
        self.cell_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint.save(ckpt_path)
        meta_path.write_text(json.dumps({"cell": cell.label(), "test_accuracy": acc,
                                         "log": result.log_lines()}, indent=1))
        self.runs.append(f"run\t{cell.label()}\t{acc:.4f}")
        return CellOutcome(cell, acc, result.checkpoint, True)


def model_config_lines(cfg: ModelConfig) -> list[str]:
    """``model.*`` lines in config-file syntax, enough to rebuild ``cfg``."""
    lines = [f"model.profile = {cfg.profile}"]
    for name, value in cfg.as_dict().items():
        if name == "profile":
            continue
        if isinstance(value, bool):
            text = "on" if value else "off"
        elif isinstance(value, (tuple, list)):
            text = ", ".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"model.{name} = {text}")
    return lines


def sidecar_path(ckpt_path) -> Path:
    p = Path(ckpt_path)
    return p.with_name(p.name + ".cfg")


def write_sidecar(ckpt_path, cfg: ModelConfig) -> Path:
    path = sidecar_path(ckpt_path)
    path.write_text("\n".join(model_config_lines(cfg)) + "\n", encoding="utf-8")
    return path


def load_model(ckpt_path, cfg: ModelConfig):
    return model_from_checkpoint(Checkpoint.load(ckpt_path), cfg)
