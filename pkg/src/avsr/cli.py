"""``avsr`` command line: gen-data, train, eval, ablate, gradcheck.

Exit codes: 0 success, 1 usage or config error, 2 data or checkpoint error,
3 training or numerical error (including failed gradient checks).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .errors import AVSRError, ConfigError, DataError, UsageError
from .models import ModelConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(message)


def _model_config_for(ckpt_path: Path, config_path: str | None) -> ModelConfig:
    from .experiments import sidecar_path

    if config_path:
        return load_config(config_path).model
    side = sidecar_path(ckpt_path)
    if not side.exists():
        raise UsageError(f"no model config: pass --config or provide {side}")
    return load_config(side).model


def cmd_gen_data(args) -> int:
    from .data import SPLITS, generate_synthetic

    spec = load_config(args.spec).synthetic if args.spec else ExperimentConfig().synthetic
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    manifest = generate_synthetic(spec, args.out)
    counts = {s: len(manifest.subset(s).records) for s in SPLITS}
    print(f"manifest {Path(args.out) / 'manifest.tsv'}")
    print(" ".join(f"{s}={n}" for s, n in counts.items()) + f" classes={manifest.num_classes}")
    return 0


def _experiment(args) -> ExperimentConfig:
    exp = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        exp.train = exp.train.replace(seed=args.seed)
    if getattr(args, "out", None):
        exp.out_dir = args.out
    elif exp.source is not None and not Path(exp.out_dir).is_absolute():
        exp.out_dir = str(exp.resolve(exp.out_dir))
    return exp


def cmd_train(args) -> int:
    from .experiments import load_splits, write_sidecar
    from .train import Checkpoint, train_fused, train_stream

    exp = _experiment(args)
    if args.stage == "fused":
        missing = [f"checkpoints.{m}" for m in ("audio", "video") if m not in exp.checkpoints]
        if missing:
            raise UsageError(f"fused training needs {', '.join(missing)} in the config")
    data = load_splits(exp)
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.stage == "fused":
        ckpts = {m: Checkpoint.load(exp.resolve(exp.checkpoints[m])) for m in ("audio", "video")}
        result = train_fused(data, ckpts["audio"], ckpts["video"], exp.model, exp.train, out)
    else:
        result = train_stream(data, args.stage, exp.model, exp.train, out)
    ckpt_path = out / f"{args.stage}.ckpt"
    write_sidecar(ckpt_path, exp.model)
    metrics = out / f"{args.stage}.metrics.tsv"
    metrics.write_text("\n".join(result.log_lines()) + "\n", encoding="utf-8")
    for name, ok in result.audits.items():
        print(f"audit {name} {'ok' if ok else 'VIOLATED'}")
    print(f"checkpoint {ckpt_path}")
    print(f"metrics {metrics}")
    return 0 if all(result.audits.values()) else 3


def cmd_eval(args) -> int:
    from .data import read_manifest
    from .experiments import load_model
    from .train import evaluate

    ckpt = Path(args.ckpt)
    cfg = _model_config_for(ckpt, args.config)
    model = load_model(ckpt, cfg)
    clips = read_manifest(args.data).subset(args.split).load()
    res = evaluate(model, clips)
    print(f"split {args.split}")
    print(res.summary())
    print("confusion (rows true, columns predicted)")
    for row in res.confusion:
        print(" ".join(f"{v:4d}" for v in row))
    return 0


def cmd_ablate(args) -> int:
    from .experiments import Ablation, load_splits
    from .report import emit

    exp = _experiment(args)
    ablation = Ablation(exp, load_splits(exp))
    tables = ablation.run()
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = emit(tables)
    (out / "results.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(out / "runs.log", "a", encoding="utf-8") as fh:
        for run in ablation.runs:
            fh.write(run + "\n")
    for t in tables:
        print(t.text())
        print()
    print("\n".join(lines))
    failed = ablation.failed()
    for o in failed:
        print(f"failed cell: {o.cell.label()}: {o.error}", file=sys.stderr)
    return 3 if failed else 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_scope

    results = run_scope(args.scope, args.seed, inject_bug=args.inject_bug)
    failed = 0
    for r in results:
        print(r.line())
        failed += not r.report.passed
    print(f"{len(results) - failed}/{len(results)} passed")
    return 3 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="avsr", description="Audio-visual word recognition experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic dataset in the LRW-style layout")
    g.add_argument("--spec", help="config file; only data.synthetic.* keys are used")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(fn=cmd_gen_data)

    t = sub.add_parser("train", help="train one stream or the fused model")
    t.add_argument("config")
    t.add_argument("--stage", required=True, choices=("audio", "video", "fused"))
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory (overrides out_dir)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True, help="manifest.tsv")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--config", help="model config (default: the checkpoint's .cfg sidecar)")
    e.set_defaults(fn=cmd_eval)

    a = sub.add_parser("ablate", help="train and tabulate the ablation grid")
    a.add_argument("config")
    a.add_argument("--out", help="output directory (overrides out_dir)")
    a.set_defaults(fn=cmd_ablate)

    c = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    c.add_argument("--scope", default="op", choices=("op", "layer", "model"))
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    c.set_defaults(fn=cmd_gradcheck)
    return p


def _thread_limit() -> int:
    raw = os.environ.get("AVSR_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"AVSR_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("AVSR_THREADS must be at least 1")
    return n


def main(argv=None) -> int:
    from threadpoolctl import threadpool_limits

    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing command (gen-data, train, eval, ablate, gradcheck)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        with threadpool_limits(limits=_thread_limit()):
            return args.fn(args)
    except AVSRError as exc:
        print(f"avsr: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"avsr: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
