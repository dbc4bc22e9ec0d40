"""Datasets, normalization, splitting, batching and the binary container.

Container layout (all integers little-endian)::

    b"EEGC" | version u16 | num_samples u64 | seq_len u32 | num_classes u16
    class names: (u16 len + UTF-8) * num_classes
    keys:        (u16 len + UTF-8) * num_samples
    labels:      u8 * num_samples
    signals:     f32 * num_samples * seq_len, row-major
    [optional]   b"SPLT" | seed u64 | u8 * num_samples   (0 train, 1 val, 2 test)

The trailing split section is the container's metadata area; ``split``
rewrites it and leaves the rest of the file untouched.
"""
from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, InputError

CLASS_NAMES = ("Noise", "Artifacts", "Physiological", "Pathological")
SPLITS = ("train", "val", "test")
ZSCORE_EPS = 1e-8

MAGIC = b"EEGC"
VERSION = 1
SPLIT_MAGIC = b"SPLT"
_HEADER = struct.Struct("<4sHQIH")


@dataclass
class Dataset:
    signals: np.ndarray  # [N, L] float32
    labels: np.ndarray  # [N] uint8
    keys: list[str]
    class_names: tuple[str, ...] = CLASS_NAMES
    splits: dict[str, str] | None = None
    split_seed: int | None = None

    def __post_init__(self):
        self.signals = np.ascontiguousarray(self.signals, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.signals.ndim != 2:
            raise InputError(f"signals must be [N, L], got {self.signals.shape}")
        if len(self.labels) != len(self.signals) or len(self.keys) != len(self.signals):
            raise InputError("signals, labels and keys must have equal length")
        if len(set(self.keys)) != len(self.keys):
            raise InputError("sample keys must be unique")
        if len(self.labels) and int(self.labels.max()) >= len(self.class_names):
            raise InputError("label id out of range for class names")

    def __len__(self):
        return len(self.keys)

    @property
    def seq_len(self) -> int:
        return self.signals.shape[1]

    def class_counts(self, indices=None) -> np.ndarray:
        labels = self.labels if indices is None else self.labels[indices]
        return np.bincount(labels, minlength=len(self.class_names))

    def split_indices(self, split: str) -> np.ndarray:
        if self.splits is None:
            raise ConfigurationError("dataset carries no split assignment; run split first")
        if split not in SPLITS:
            raise ConfigurationError(f"unknown split {split!r}")
        return np.array([i for i, k in enumerate(self.keys) if self.splits[k] == split], dtype=np.int64)

    def equals(self, other: "Dataset") -> bool:
        """Bit-exact comparison, including split metadata."""
        return (
            self.keys == other.keys
            and tuple(self.class_names) == tuple(other.class_names)
            and np.array_equal(self.labels, other.labels)
            and self.signals.tobytes() == other.signals.tobytes()
            and self.splits == other.splits
            and self.split_seed == other.split_seed
        )


def zscore_normalize(signal, epsilon: float = ZSCORE_EPS) -> np.ndarray:
    """Per-sample z-score over the last axis: ``(x - mean) / (std + eps)``.

    Population standard deviation. Works on a single vector or a stack of
    them (``[..., L]``); the model's input layer calls this same function.
    """
    x = np.asarray(signal)
    if x.shape[-1] < 1:
        raise InputError("cannot normalize an empty signal")
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return (x - mu) / (sd + epsilon)


def split_counts(n: int, fractions=(0.7, 0.2, 0.1)) -> tuple[int, int, int]:
    _check_fractions(fractions)
    if n < 3:
        raise ConfigurationError(f"need at least 3 samples to split, got {n}")
    # tiny slack so 0.7*10 style products do not floor to 6
    n_train = math.floor(fractions[0] * n + 1e-9)
    n_val = math.floor(fractions[1] * n + 1e-9)
    return n_train, n_val, n - n_train - n_val


def _check_fractions(fractions):
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ConfigurationError(f"need three non-negative fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"fractions must sum to 1, got {sum(fractions)}")


def split_dataset(dataset: Dataset, fractions=(0.7, 0.2, 0.1), seed: int = 0) -> dict[str, str]:
    """Seeded shuffle of the keys, then floor-sized train/val and the rest to test."""
    n_train, n_val, _ = split_counts(len(dataset), fractions)
    order = np.random.default_rng(seed).permutation(len(dataset))
    assignment = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            assignment[dataset.keys[idx]] = "train"
        elif rank < n_train + n_val:
            assignment[dataset.keys[idx]] = "val"
        else:
            assignment[dataset.keys[idx]] = "test"
    return assignment


def apply_split(dataset: Dataset, fractions=(0.7, 0.2, 0.1), seed: int = 0) -> Dataset:
    dataset.splits = split_dataset(dataset, fractions, seed)
    dataset.split_seed = seed
    return dataset


@dataclass
class BatchAuditReport:
    dominance: list[float]
    dominant_fraction: float  # share of batches above the threshold
    first_k_range: tuple[float, float]
    threshold: float = 0.90
    class_counts: list[list[int]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "num_batches": len(self.dominance),
            "threshold": self.threshold,
            "dominant_fraction": self.dominant_fraction,
            "first_k_range": list(self.first_k_range),
            "max_dominance": max(self.dominance) if self.dominance else 0.0,
        }


def batch_dominance(labels) -> float:
    labels = np.asarray(labels)
    return float(np.bincount(labels).max() / len(labels))


def audit_batches(label_batches, threshold: float = 0.90, first_k: int = 5) -> BatchAuditReport:
    dom, counts = [], []
    for lb in label_batches:
        lb = np.asarray(lb, dtype=np.int64)
        counts.append(np.bincount(lb).tolist())
        dom.append(batch_dominance(lb))
    head = dom[:first_k]
    frac = sum(d > threshold for d in dom) / len(dom) if dom else 0.0
    rng = (min(head), max(head)) if head else (0.0, 0.0)
    return BatchAuditReport(dom, frac, rng, threshold, counts)


def make_batches(indices, labels, batch_size: int, seed: int, stratified: bool = False):
    """Globally shuffle ``indices`` and cut contiguous batches.

    With ``stratified`` the shuffled order is interleaved class by class so
    every batch approximates the overall class mix. Returns the list of index
    batches and the dominance audit of those batches.
    """
    if batch_size < 1:
        raise ConfigurationError("batch_size must be >= 1")
    indices = np.asarray(indices, dtype=np.int64)
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    order = indices[rng.permutation(len(indices))]
    if stratified and len(order):
        per_class = [order[labels[order] == c] for c in np.unique(labels[order])]
        # place each class's members at evenly spaced fractional positions
        pos = np.concatenate([(np.arange(len(m)) + rng.random()) / len(m) for m in per_class])
        order = np.concatenate(per_class)[np.argsort(pos, kind="stable")]
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    report = audit_batches([labels[b] for b in batches])
    return batches, report


# --- container -------------------------------------------------------------

def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise InputError(f"string too long for container: {s[:32]!r}...")
    return struct.pack("<H", len(b)) + b


def _encode_body(ds: Dataset) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(ds), ds.seq_len, len(ds.class_names))]
    parts += [_pack_str(c) for c in ds.class_names]
    parts += [_pack_str(k) for k in ds.keys]
    parts.append(ds.labels.astype("u1").tobytes())
    parts.append(ds.signals.astype("<f4").tobytes())
    return b"".join(parts)


def _encode_split(ds: Dataset) -> bytes:
    if ds.splits is None:
        return b""
    codes = bytes(SPLITS.index(ds.splits[k]) for k in ds.keys)
    return SPLIT_MAGIC + struct.pack("<Q", ds.split_seed or 0) + codes


def container_write(dataset: Dataset, path) -> None:
    Path(path).write_bytes(_encode_body(dataset) + _encode_split(dataset))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"bad UTF-8 string: {e}") from None


def _decode(buf: bytes) -> tuple[Dataset, int]:
    r = _Reader(buf)
    magic, version, n, L, c = r.unpack(_HEADER.format)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    names = tuple(r.string() for _ in range(c))
    keys = [r.string() for _ in range(n)]
    labels = np.frombuffer(r.take(n), dtype="u1").copy()
    signals = np.frombuffer(r.take(n * L * 4), dtype="<f4").reshape(n, L).astype(np.float32)
    body_end = r.pos
    splits, seed = None, None
    if r.pos < len(buf):
        if r.take(4) != SPLIT_MAGIC:
            raise FormatError("trailing bytes after signal block are not a split section")
        (seed,) = r.unpack("<Q")
        codes = r.take(n)
        if any(b > 2 for b in codes):
            raise FormatError("invalid split code")
        splits = {k: SPLITS[b] for k, b in zip(keys, codes)}
        if r.pos != len(buf):
            raise FormatError("trailing bytes after split section")
    try:
        ds = Dataset(signals, labels, keys, names, splits, seed)
    except InputError as e:
        raise FormatError(str(e)) from None
    return ds, body_end


def container_read(path) -> Dataset:
    return _decode(Path(path).read_bytes())[0]


def container_write_split(path, dataset: Dataset) -> None:
    """Replace only the split section of an existing container file."""
    buf = Path(path).read_bytes()
    _, body_end = _decode(buf)
    Path(path).write_bytes(buf[:body_end] + _encode_split(dataset))


def container_size(num_samples: int, seq_len: int, class_names, keys) -> int:
    """Byte size of a container without split section."""
    return (
        _HEADER.size
        + sum(2 + len(c.encode()) for c in class_names)
        + sum(2 + len(k.encode()) for k in keys)
        + num_samples * (1 + seq_len * 4)
    )


# --- text ingestion --------------------------------------------------------

_LINE = re.compile(r"^\s*(\d+)\s*[\t ;:|]\s*(.+?)\s*$")


def read_text(path, class_names=CLASS_NAMES) -> Dataset:
    """Read ``label<sep>v1,v2,...`` records, one per line.

    ``<sep>`` may be a tab, space, ``;``, ``:`` or ``|``. Blank lines and lines
    starting with ``#`` are skipped. All records must have the same length.
    """
    signals, labels, keys = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            m = _LINE.match(line)
            if not m:
                raise InputError(f"{path}:{lineno}: expected 'label<sep>v1,v2,...'")
            try:
                values = [float(v) for v in m.group(2).split(",")]
            except ValueError as e:
                raise InputError(f"{path}:{lineno}: {e}") from None
            if signals and len(values) != len(signals[0]):
                raise InputError(f"{path}:{lineno}: length {len(values)} != {len(signals[0])}")
            label = int(m.group(1))
            if label >= len(class_names):
                raise InputError(f"{path}:{lineno}: label {label} out of range")
            signals.append(values)
            labels.append(label)
            keys.append(f"line{lineno}")
    if not signals:
        raise InputError(f"{path}: no records")
    return Dataset(np.array(signals, dtype=np.float32), np.array(labels), keys, tuple(class_names))
