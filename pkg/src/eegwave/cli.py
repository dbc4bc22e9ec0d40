"""Command-line entry point: synth, ingest, split, train, eval.

Exit codes: 0 success, 2 usage/config error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import data as D
from . import models as M
from . import training as T
from .errors import ConfigurationError, FormatError, InputError, NumericalError
from .metrics import build_report, confusion_matrix, emit_report
from .synth import synth_generate

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

RUN_KEYS = {"model", "architecture", "training", "data", "out"}


class UsageError(Exception):
    pass


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def load_run_config(path) -> dict:
    """Parse a JSON run config, rejecting unknown keys with a field path."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: top level must be an object")
    unknown = set(raw) - RUN_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown key(s) {sorted(unknown)}; allowed {sorted(RUN_KEYS)}")
    model = raw.get("model", "wavenet")
    if model not in M.ARCHITECTURES:
        raise UsageError(f"{path}: model: expected one of {sorted(M.ARCHITECTURES)}, got {model!r}")
    for section, cls in (("architecture", M.ARCHITECTURES[model]), ("training", T.TrainConfig)):
        sub = raw.get(section, {})
        if not isinstance(sub, dict):
            raise UsageError(f"{path}: {section}: must be an object")
        bad = set(sub) - _field_names(cls) - ({"model"} if section == "training" else set())
        if bad:
            raise UsageError(f"{path}: {section}: unknown field(s) {sorted(bad)}")
    return raw


def make_configs(raw: dict, model_flag=None, max_epochs=None):
    model = model_flag or raw.get("model", "wavenet")
    arch_cfg = M.ARCHITECTURES[model](**raw.get("architecture", {}))
    tr = {k: v for k, v in raw.get("training", {}).items() if k != "model"}
    if max_epochs is not None:
        tr["max_epochs"] = max_epochs
    factory = T.TrainConfig.for_wavenet if model == "wavenet" else T.TrainConfig.for_tcn
    return arch_cfg, factory(**tr)


def cmd_synth(args) -> int:
    ds = synth_generate(args.per_class, args.length, args.rate, args.seed)
    D.container_write(ds, args.out)
    counts = ds.class_counts()
    print(f"wrote {len(ds)} samples to {args.out}")
    for name, c in zip(ds.class_names, counts):
        print(f"  {name}: {c}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    ds = D.read_text(args.text)
    D.container_write(ds, args.out)
    print(f"wrote {len(ds)} samples (length {ds.seq_len}) to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    ds = D.container_read(args.data)
    D.apply_split(ds, tuple(args.fractions), args.seed)
    D.container_write_split(args.data, ds)
    for s in D.SPLITS:
        print(f"{s}: {len(ds.split_indices(s))}")
    return EXIT_OK


def cmd_train(args) -> int:
    raw = load_run_config(args.config) if args.config else {}
    data_path = args.data or raw.get("data")
    out = Path(args.out or raw.get("out") or "runs/latest")
    if not data_path:
        raise UsageError("no dataset given (--data or config 'data')")
    arch_cfg, cfg = make_configs(raw, args.model, args.max_epochs)
    ds = D.container_read(data_path)
    if ds.splits is None:
        raise UsageError(f"{data_path}: container has no split metadata; run 'split' first")
    if arch_cfg.input_length != ds.seq_len:
        arch_cfg = dataclasses.replace(arch_cfg, input_length=ds.seq_len)
    if arch_cfg.num_classes != len(ds.class_names):
        raise UsageError(f"model has {arch_cfg.num_classes} classes, dataset {len(ds.class_names)}")
    out.mkdir(parents=True, exist_ok=True)
    model = M.build_model(cfg.model, arch_cfg, cfg.init_seed)
    result = T.train(model, ds, cfg, checkpoint_path=out / "best.ckpt",
                     on_epoch=lambda r: print(r.to_line(), flush=True))
    (out / "train_log.jsonl").write_text("\n".join(result.log_lines()) + "\n", encoding="utf-8")
    (out / "batch_audit.json").write_text(json.dumps(result.audit, sort_keys=True, indent=2) + "\n")
    print(f"best epoch {result.best_epoch} macro-F1 {result.best_macro_f1:.4f} -> {out / 'best.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model, meta = T.read_checkpoint(args.checkpoint)
    except FormatError as e:
        raise UsageError(str(e)) from None
    ds = D.container_read(args.data)
    if model.config.num_classes != len(ds.class_names):
        raise UsageError(f"checkpoint predicts {model.config.num_classes} classes, dataset has {len(ds.class_names)}")
    if args.split == "all":
        idx = np.arange(len(ds))
    else:
        if ds.splits is None:
            raise UsageError(f"{args.data}: no split metadata, cannot select split {args.split!r}")
        idx = ds.split_indices(args.split)
    if len(idx) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    probs = M.predict_proba(model, ds.signals[idx])
    labels = ds.labels[idx].astype(np.int64)
    cm = confusion_matrix(labels, probs.argmax(axis=1), len(ds.class_names), ds.class_names)
    report = build_report(cm, probs, labels)
    if args.format == "structured":
        print(emit_report(report, "structured"))
    else:
        print(cm.render())
        print()
        print(emit_report(report, "table"), end="")
    return EXIT_OK


def _fraction_triple(s: str):
    parts = [float(p) for p in s.replace(" ", "").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("need three comma-separated fractions")
    return parts


def _synth_length(s: str) -> int:
    from .synth import MIN_LENGTH
    n = int(s)
    if n < MIN_LENGTH:
        raise argparse.ArgumentTypeError(f"length must be >= {MIN_LENGTH}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eegwave", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic 4-class dataset container")
    s.add_argument("--out", required=True)
    s.add_argument("--per-class", type=int, default=500)
    s.add_argument("--length", type=_synth_length, default=1500)
    s.add_argument("--rate", type=float, default=5000.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="convert 'label<sep>v1,v2,...' text records to a container")
    s.add_argument("--text", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("split", help="assign train/val/test in the container metadata")
    s.add_argument("--data", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fractions", type=_fraction_triple, default=[0.7, 0.2, 0.1])
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train a model, writing checkpoint and logs under --out")
    s.add_argument("--config")
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--model", choices=sorted(M.ARCHITECTURES))
    s.add_argument("--max-epochs", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a container split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=["train", "val", "test", "all"], default="all")
    s.add_argument("--format", choices=["table", "structured"], default="table")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # argparse reports usage errors this way
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    warnings.formatwarning = lambda msg, cat, *_a, **_k: f"warning: {msg}\n"
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ConfigurationError, FormatError, InputError, OSError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
