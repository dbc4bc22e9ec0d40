"""Training loop, adaptive dropout controller and checkpoint codec.

Checkpoint layout (little-endian)::

    b"SEQC" | version u16 | meta_len u32 | meta (UTF-8 JSON)
    per parameter: name_len u16 | name | rank u8 | dims u32 * rank | f32 data
"""
from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import models
from .autodiff import Tape
from .data import Dataset, make_batches
from .errors import ConfigurationError, FormatError, InputError, NumericalError
from .metrics import auc_ovr_macro, build_report, confusion_matrix
from .optim import AdamState, FocalLossConfig, accumulate_gradients, adam_step, class_weights_inverse_frequency, \
    focal_loss, focal_loss_per_sample

log = logging.getLogger(__name__)

DROPOUT_MIN, DROPOUT_MAX = 0.05, 0.50
SCORE_CLAMP = 2.0


@dataclass
class CompositeInputs:
    prev_acc: float
    val_acc: float
    prev_auc: float
    auc: float
    val_loss: float
    prev_loss: float
    train_acc: float
    baseline_gap: float = 0.02
    weights: tuple[float, float, float, float] = (1.5, 0.8, 1.0, 1.0)
    no_learn_threshold: float = 0.01
    no_learn_else: float = 20.0
    stagnation_numerator: float = 25.0


def composite_score(inp: CompositeInputs) -> float:
    """Overfitting/stagnation score; positive values ask for more dropout.

    Returns ``inf`` when validation accuracy did not move at all (the
    stagnation term divides by zero); :func:`update_dropout` clamps it.
    """
    w_acc, w_auc, w_loss, w_gap = inp.weights
    train = max(inp.train_acc, 1e-8)
    rel_gap = (train - inp.val_acc) / train
    delta = abs(inp.val_acc - inp.prev_acc)
    no_learn = delta if delta < inp.no_learn_threshold else inp.no_learn_else
    if no_learn == 0:
        return math.inf
    return (
        w_acc * (inp.prev_acc - inp.val_acc)
        + w_auc * (inp.prev_auc - inp.auc)
        + w_loss * (inp.val_loss - inp.prev_loss)
        + w_gap * (rel_gap - inp.baseline_gap)
        + inp.stagnation_numerator / no_learn
    )


def update_dropout(current: float, score: float, coefficient: float = 0.05,
                   bounds: tuple[float, float] = (DROPOUT_MIN, DROPOUT_MAX),
                   score_clamp: float = SCORE_CLAMP) -> float:
    s = min(max(score, -score_clamp), score_clamp)
    return min(max(current + coefficient * s, bounds[0]), bounds[1])


@dataclass
class TrainConfig:
    model: str = "wavenet"
    micro_batch: int = 32
    accumulation: int = 2
    max_epochs: int = 10
    learning_rate: float = 1e-3
    l2_lambda: float = 1e-4
    focal_gamma: float = 2.0
    use_class_weights: bool = True
    early_stop_patience: int | None = None  # epochs without val-AUC gain; None disables
    adaptive_dropout: bool = True
    snapshot_every: int = 150
    stratified_batches: bool = False
    data_seed: int = 0
    init_seed: int = 0
    dropout_seed: int = 0
    eval_batch: int = 128

    def __post_init__(self):
        if self.model not in models.ARCHITECTURES:
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.micro_batch < 1 or self.accumulation < 1 or self.max_epochs < 1:
            raise ConfigurationError("micro_batch, accumulation and max_epochs must be >= 1")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigurationError("early_stop_patience must be >= 1 or null")

    @classmethod
    def for_wavenet(cls, **kw) -> "TrainConfig":
        return cls(**{"model": "wavenet", "micro_batch": 32, "accumulation": 2,
                      "early_stop_patience": None, "adaptive_dropout": True, **kw})

    @classmethod
    def for_tcn(cls, **kw) -> "TrainConfig":
        return cls(**{"model": "tcn", "micro_batch": 16, "accumulation": 1,
                      "early_stop_patience": 3, "adaptive_dropout": False, **kw})


@dataclass
class EpochRecord:
    epoch: int
    train_accuracy: float
    train_loss: float
    val_accuracy: float
    val_auc: float
    val_loss: float
    macro_f1: float
    dropout_rate_after: float
    composite_score: float | None = None

    def to_line(self) -> str:
        d = {"type": "epoch", **asdict(self)}
        if d["composite_score"] is not None and not math.isfinite(d["composite_score"]):
            d["composite_score"] = "inf"
        return json.dumps(d, sort_keys=True)


@dataclass
class BatchSnapshot:
    epoch: int
    batch: int
    train_loss: float
    train_accuracy: float

    def to_line(self) -> str:
        return json.dumps({"type": "snapshot", **asdict(self)}, sort_keys=True)


@dataclass
class TrainResult:
    best: models.ModelState
    best_epoch: int
    best_macro_f1: float
    records: list[EpochRecord]
    snapshots: list[BatchSnapshot] = field(default_factory=list)
    audit: dict | None = None
    stopped_early: bool = False

    def log_lines(self) -> list[str]:
        by_epoch: dict[int, list[str]] = {}
        for s in self.snapshots:
            by_epoch.setdefault(s.epoch, []).append(s.to_line())
        lines = []
        for r in self.records:
            lines += by_epoch.get(r.epoch, [])
            lines.append(r.to_line())
        return lines


def evaluate(model: models.ModelState, ds: Dataset, indices, loss_cfg: FocalLossConfig, batch: int = 128) -> dict:
    """Validation metrics in inference mode."""
    probs = models.predict_proba(model, ds.signals[indices], batch)
    labels = ds.labels[indices].astype(np.int64)
    cm = confusion_matrix(labels, probs.argmax(axis=1), len(ds.class_names), ds.class_names)
    report = build_report(cm)
    try:
        auc = auc_ovr_macro(probs, labels)
    except InputError:
        auc = 0.5
    loss = float(np.mean(focal_loss_per_sample(probs, labels, loss_cfg)))
    return {"accuracy": report.accuracy, "auc": auc, "loss": loss, "macro_f1": report.macro_f1,
            "probs": probs, "report": report}


def _grad_of_batch(model, x, y, loss_cfg, rate, rng):
    tape = Tape()
    probs = models.forward(model, x, training=True, dropout_rate=rate, tape=tape, rng=rng)
    loss = focal_loss(probs, y, loss_cfg)
    grads = tape.backward(loss)
    return grads, float(loss.data), probs.data


def train(model: models.ModelState, data: Dataset, config: TrainConfig,
          checkpoint_path=None, on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Fit ``model`` in place on the dataset's train split, validating each epoch.

    The best macro-F1 parameters are returned as a separate copy (and written
    to ``checkpoint_path`` when given). Ties keep the earlier epoch.
    """
    if model.arch != config.model:
        raise ConfigurationError(f"model is {model.arch!r} but config trains {config.model!r}")
    train_idx = data.split_indices("train")
    val_idx = data.split_indices("val")
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ConfigurationError("train and val splits must be non-empty")
    num_classes = model.config.num_classes
    alpha = None
    if config.use_class_weights:
        alpha = class_weights_inverse_frequency(np.bincount(data.labels[train_idx], minlength=num_classes))
    loss_cfg = FocalLossConfig(gamma=config.focal_gamma, alpha=alpha)
    adam = AdamState(learning_rate=config.learning_rate, l2_lambda=config.l2_lambda)
    drop_rng = np.random.default_rng(config.dropout_seed)
    rate = getattr(model.config, "dropout_rate", 0.0)

    records: list[EpochRecord] = []
    snapshots: list[BatchSnapshot] = []
    best, best_f1, best_epoch = None, -1.0, 0
    best_auc, since_auc = -1.0, 0
    audit = None
    stopped = False

    for epoch in range(1, config.max_epochs + 1):
        batches, report = make_batches(train_idx, data.labels, config.micro_batch,
                                       seed=config.data_seed * 100003 + epoch,
                                       stratified=config.stratified_batches)
        if audit is None:
            audit = report.as_dict()
        run_loss = run_correct = run_n = 0.0
        pending, sizes = [], []
        for b, idx in enumerate(batches, 1):
            x = data.signals[idx]
            y = data.labels[idx].astype(np.int64)
            grads, loss, probs = _grad_of_batch(model, x, y, loss_cfg, rate, drop_rng)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {b}")
            run_loss += loss * len(idx)
            run_correct += float((probs.argmax(axis=1) == y).sum())
            run_n += len(idx)
            pending.append(grads)
            sizes.append(len(idx))
            if len(pending) == config.accumulation or b == len(batches):
                g = accumulate_gradients(pending, sizes)
                adam_step(adam, model.params, g, models.is_decayed)
                pending, sizes = [], []
            if config.snapshot_every and b % config.snapshot_every == 0:
                snapshots.append(BatchSnapshot(epoch, b, run_loss / run_n, run_correct / run_n))

        ev = evaluate(model, data, val_idx, loss_cfg, config.eval_batch)
        train_acc = run_correct / run_n
        score = None
        if config.adaptive_dropout and model.arch == "wavenet" and records:
            prev = records[-1]
            score = composite_score(CompositeInputs(
                prev_acc=prev.val_accuracy, val_acc=ev["accuracy"], prev_auc=prev.val_auc, auc=ev["auc"],
                val_loss=ev["loss"], prev_loss=prev.val_loss, train_acc=train_acc))
            rate = update_dropout(rate, score)
        rec = EpochRecord(epoch, train_acc, run_loss / run_n, ev["accuracy"], ev["auc"], ev["loss"],
                          ev["macro_f1"], rate, score)
        records.append(rec)
        log.info(rec.to_line())
        if on_epoch:
            on_epoch(rec)

        if ev["macro_f1"] > best_f1:
            best_f1, best_epoch = ev["macro_f1"], epoch
            best = model.copy()
            if hasattr(best.config, "dropout_rate"):
                best.config.dropout_rate = rate
            if checkpoint_path is not None:
                save_checkpoint(best, checkpoint_path, extra={"epoch": epoch, "macro_f1": best_f1})

        if ev["auc"] > best_auc:
            best_auc, since_auc = ev["auc"], 0
        else:
            since_auc += 1
        if config.early_stop_patience is not None and since_auc >= config.early_stop_patience:
            stopped = True
            break

    if hasattr(model.config, "dropout_rate"):
        model.config.dropout_rate = rate
    return TrainResult(best, best_epoch, best_f1, records, snapshots, audit, stopped)


# --- checkpoint codec ------------------------------------------------------

CKPT_MAGIC = b"SEQC"
CKPT_VERSION = 1


def save_checkpoint(model: models.ModelState, path, extra: dict | None = None) -> None:
    meta = {
        "arch": model.arch,
        "config": model.config_dict(),
        "param_count": models.parameter_count(model.arch, model.config),
        **(extra or {}),
    }
    mb = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<HI", CKPT_VERSION, len(mb)), mb]
    for name, arr in model.params.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    # write to a temp file first so a crash never leaves a half-written checkpoint
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_checkpoint(path) -> tuple[models.ModelState, dict]:
    buf = Path(path).read_bytes()
    if len(buf) < 10 or buf[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    version, mlen = struct.unpack_from("<HI", buf, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    if pos + mlen > len(buf):
        raise FormatError(f"{path}: truncated metadata")
    try:
        meta = json.loads(buf[pos:pos + mlen].decode("utf-8"))
        config = models.config_from_dict(meta["arch"], meta["config"])
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{path}: bad metadata: {e}") from None
    pos += mlen
    params = {}
    try:
        while pos < len(buf):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            if pos + 4 * n > len(buf):
                raise FormatError(f"{path}: truncated parameter {name!r}")
            params[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * n
    except (struct.error, UnicodeDecodeError) as e:
        raise FormatError(f"{path}: truncated or corrupt parameter block: {e}") from None
    model = models.ModelState(meta["arch"], config, params)
    expected = models.parameter_count(model.arch, config)
    if meta.get("param_count") != expected or model.num_parameters != expected:
        raise FormatError(f"{path}: parameter count {model.num_parameters} does not match config ({expected})")
    reference = models.build_model(model.arch, config, 0)
    for name, arr in reference.params.items():
        if name not in params or params[name].shape != arr.shape:
            raise FormatError(f"{path}: parameter {name!r} missing or misshapen")
    return model, meta


def load_checkpoint(path) -> models.ModelState:
    return read_checkpoint(path)[0]
