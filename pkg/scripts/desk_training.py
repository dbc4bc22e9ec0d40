"""Desk-scale training run on synthetic data for both architectures.

Usage: python scripts/desk_training.py [--arch wavenet|tcn|both] [--out runs/desk] [--per-class 500]

Writes per-architecture checkpoints and JSON-lines logs, and prints one line
per epoch plus a final validation/test summary.
"""
import argparse
import time
import warnings
from pathlib import Path

from eegwave import data as D
from eegwave import models as M
from eegwave import training as T
from eegwave.metrics import UndefinedMetricWarning, build_report, confusion_matrix, emit_report
from eegwave.synth import synth_generate


def build(arch: str, length: int, seed: int):
    if arch == "wavenet":
        cfg = M.WaveNetConfig(dilations=(1, 2, 4, 8, 16, 32), filters=16, head_filters=16, input_length=length)
        return M.build_wavenet(cfg, seed), T.TrainConfig.for_wavenet(init_seed=seed)
    return M.build_tcn(M.TCNConfig(input_length=length), seed), T.TrainConfig.for_tcn(init_seed=seed)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--arch", choices=["wavenet", "tcn", "both"], default="both")
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--per-class", type=int, default=500)
    ap.add_argument("--length", type=int, default=1500)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--split-seed", type=int, default=11)
    ap.add_argument("--init-seed", type=int, default=1)
    args = ap.parse_args()
    warnings.simplefilter("ignore", UndefinedMetricWarning)

    ds = D.apply_split(synth_generate(args.per_class, args.length, 5000, seed=args.data_seed), seed=args.split_seed)
    archs = ["wavenet", "tcn"] if args.arch == "both" else [args.arch]
    for arch in archs:
        out = Path(args.out) / arch
        out.mkdir(parents=True, exist_ok=True)
        model, cfg = build(arch, args.length, args.init_seed)
        print(f"== {arch}: {model.num_parameters} parameters, receptive field {M.receptive_field(model)}")
        t0 = time.perf_counter()
        res = T.train(model, ds, cfg, out / "best.ckpt",
                      on_epoch=lambda r: print(f"  epoch {r.epoch:2d}  train acc {r.train_accuracy:.3f}  "
                                               f"val acc {r.val_accuracy:.3f}  val auc {r.val_auc:.4f}  "
                                               f"macro-F1 {r.macro_f1:.3f}  dropout {r.dropout_rate_after:.3f}"))
        (out / "train_log.jsonl").write_text("\n".join(res.log_lines()) + "\n")
        print(f"  {time.perf_counter() - t0:.0f}s, best epoch {res.best_epoch}, "
              f"max val acc {max(r.val_accuracy for r in res.records):.4f}")
        idx = ds.split_indices("test")
        probs = M.predict_proba(res.best, ds.signals[idx])
        labels = ds.labels[idx].astype(int)
        cm = confusion_matrix(labels, probs.argmax(1), 4, ds.class_names)
        print("  test set:")
        print(cm.render())
        print(emit_report(build_report(cm, probs, labels)))


if __name__ == "__main__":
    main()
