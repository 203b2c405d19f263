"""Ablation result tables.

Four table families: attention on/off, training noise on/off, backbone depth
18/34, and an overall comparison. Each table carries the published
large-corpus accuracies as a reference column; desk-scale numbers are not
expected to match them.

Machine-readable form, one tab-separated record per line::

    table   <key>   <title>   <rows joined by |>   <columns joined by |>
    cell    <key>   <row>     <column>   <value, 'failed' or '-'>   <reference or '-'>
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

MODALITY_ROWS = {"audio": "Audio", "video": "Visual", "fused": "AudioVisual"}
FAILED = "failed"


@dataclass(frozen=True)
class Cell:
    modality: str
    attention: bool
    noise: bool
    depth: int

    def label(self) -> str:
        return (f"{self.modality} attention={'on' if self.attention else 'off'} "
                f"noise={'on' if self.noise else 'off'} depth={self.depth}")


# Published accuracies keyed by (modality, attention, noise, depth).
REFERENCE: dict[tuple[str, bool, bool, int], float] = {
    ("audio", False, False, 18): 0.9594,
    ("video", False, False, 18): 0.8290,
    ("fused", False, False, 18): 0.9743,
    ("audio", True, False, 18): 0.9702,
    ("video", True, False, 18): 0.8617,
    ("fused", True, False, 18): 0.9823,
    ("audio", True, True, 18): 0.9792,
    ("video", True, True, 18): 0.8642,
    ("fused", True, True, 18): 0.9864,
    ("audio", True, False, 34): 0.9720,
    ("video", True, False, 34): 0.8624,
    ("fused", True, False, 34): 0.9842,
}


@dataclass
class ResultTable:
    key: str
    title: str
    rows: list[str]
    columns: list[str]
    values: dict[tuple[str, str], float | None] = field(default_factory=dict)
    reference: dict[tuple[str, str], float] = field(default_factory=dict)

    def text(self) -> str:
        """Aligned text with measured columns, then the reference columns."""
        ref_cols = [f"reference (paper): {c}" for c in self.columns]
        header = [""] + self.columns + ref_cols
        body = []
        for r in self.rows:
            measured = [_fmt(self.values[(r, c)]) if (r, c) in self.values else "-"
                        for c in self.columns]
            refs = [_fmt(self.reference[(r, c)]) if (r, c) in self.reference else "-"
                    for c in self.columns]
            body.append([r] + measured + refs)
        widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
        out = [self.title, "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
        out += ["  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip() for line in body]
        return "\n".join(out)

    def lines(self) -> list[str]:
        out = [f"table\t{self.key}\t{self.title}\t{'|'.join(self.rows)}\t{'|'.join(self.columns)}"]
        for r in self.rows:
            for c in self.columns:
                value = self.values[(r, c)] if (r, c) in self.values else "-"
                ref = self.reference.get((r, c))
                ref_text = "-" if ref is None else _raw(ref)
                out.append(f"cell\t{self.key}\t{r}\t{c}\t{_raw(value)}\t{ref_text}")
        return out


def _fmt(v) -> str:
    """Measured cells: None means the run failed."""
    return FAILED if v is None else f"{v:.4f}"


def _raw(v) -> str:
    if v is None:
        return FAILED
    if isinstance(v, str):
        return v
    return repr(float(v))


def _unraw(text: str):
    if text == FAILED:
        return None
    return float(text)


def emit(tables: Iterable[ResultTable]) -> list[str]:
    return [line for t in tables for line in t.lines()]


def parse(lines: Iterable[str]) -> list[ResultTable]:
    tables: dict[str, ResultTable] = {}
    for line in lines:
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if parts[0] == "table" and len(parts) == 5:
            _, key, title, rows, cols = parts
            tables[key] = ResultTable(key, title, rows.split("|"), cols.split("|"))
        elif parts[0] == "cell" and len(parts) == 6:
            _, key, r, c, value, ref = parts
            t = tables[key]
            if value != "-":
                t.values[(r, c)] = _unraw(value)
            if ref != "-":
                t.reference[(r, c)] = float(ref)
        else:
            raise ValueError(f"malformed result line: {line!r}")
    return list(tables.values())


@dataclass(frozen=True)
class TableSpec:
    key: str
    title: str
    columns: tuple[tuple[str, bool, bool, int], ...]  # (label, attention, noise, depth)


TABLE_SPECS = (
    TableSpec("attention", "Attention ablation",
              (("without attention", False, False, 18), ("with attention", True, False, 18))),
    TableSpec("noise", "Training-noise ablation",
              (("without noise", True, False, 18), ("with noise", True, True, 18))),
    TableSpec("depth", "Backbone depth ablation",
              (("ResNet-18", True, False, 18), ("ResNet-34", True, False, 34))),
    TableSpec("overall", "Overall comparison",
              (("no attention, no noise", False, False, 18),
               ("attention, no noise", True, False, 18),
               ("attention, noise", True, True, 18))),
)


def build_tables(results: Mapping[Cell, float | None], modalities: Iterable[str]) -> list[ResultTable]:
    """Every table whose columns are all present in ``results`` for some modality.

    A ``None`` result marks a failed cell.
    """
    mods = [m for m in MODALITY_ROWS if m in set(modalities)]
    tables = []
    for spec in TABLE_SPECS:
        cells = {(m, col[0]): Cell(m, *col[1:]) for m in mods for col in spec.columns}
        if not mods or any(c not in results for c in cells.values()):
            continue
        rows = [MODALITY_ROWS[m] for m in mods]
        table = ResultTable(spec.key, spec.title, rows, [c[0] for c in spec.columns])
        for (m, label), cell in cells.items():
            table.values[(MODALITY_ROWS[m], label)] = results[cell]
            ref = REFERENCE.get((cell.modality, cell.attention, cell.noise, cell.depth))
            if ref is not None:
                table.reference[(MODALITY_ROWS[m], label)] = ref
        tables.append(table)
    return tables
