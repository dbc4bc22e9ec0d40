"""WaveNet-style classifier and the TCN baseline.

Parameters live in a flat ``name -> ndarray`` store (:class:`ModelState`);
forward passes are plain functions over that store so the same code serves
inference (no tape) and training (parameters watched on a tape).
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import layers as L
from .autodiff import Tape, Tensor
from .data import zscore_normalize
from .errors import ConfigurationError, ShapeError

DEFAULT_DILATIONS = (1, 2, 4, 8, 16, 32, 64)


@dataclass
class WaveNetConfig:
    dilations: tuple[int, ...] = DEFAULT_DILATIONS
    filters: int = 32
    kernel_size: int = 3
    head_filters: int = 32
    num_classes: int = 4
    input_length: int = 15000
    dropout_rate: float = 0.20
    l2_lambda: float = 1e-4
    skip_projection: bool = False

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigurationError(f"dilations must be positive, got {self.dilations}")
        if min(self.filters, self.kernel_size, self.head_filters, self.num_classes, self.input_length) < 1:
            raise ConfigurationError("sizes must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigurationError("dropout_rate must be in [0,1)")


@dataclass
class TCNConfig:
    dilations: tuple[int, ...] = DEFAULT_DILATIONS
    filters: int = 8
    kernel_size: int = 2
    convs_per_block: int = 2
    block_dropout: float = 0.005
    head_filters: int = 8
    num_classes: int = 4
    input_length: int = 15000
    l2_lambda: float = 1e-4

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigurationError(f"dilations must be positive, got {self.dilations}")
        if self.convs_per_block != 2:
            raise ConfigurationError("TCN blocks contain exactly two convolutions")
        if min(self.filters, self.kernel_size, self.head_filters, self.num_classes, self.input_length) < 1:
            raise ConfigurationError("sizes must be positive")


ARCHITECTURES = {"wavenet": WaveNetConfig, "tcn": TCNConfig}


@dataclass
class ModelState:
    arch: str
    config: WaveNetConfig | TCNConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "ModelState":
        return ModelState(self.arch, copy.deepcopy(self.config), {k: v.copy() for k, v in self.params.items()})

    def config_dict(self) -> dict:
        d = asdict(self.config)
        d["dilations"] = list(d["dilations"])
        return d

    def astype(self, dtype) -> "ModelState":
        return ModelState(self.arch, copy.deepcopy(self.config), {k: v.astype(dtype) for k, v in self.params.items()})


def config_from_dict(arch: str, d: dict):
    if arch not in ARCHITECTURES:
        raise ConfigurationError(f"unknown architecture {arch!r}")
    cls = ARCHITECTURES[arch]
    unknown = sorted(set(d) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigurationError(f"unknown {arch} config field(s): {', '.join(unknown)}")
    return cls(**d)


def compute_receptive_field(kernel_size: int, dilations, convs_per_level: int = 1) -> int:
    if any(d < 1 for d in dilations):
        raise ConfigurationError("dilations must be >= 1")
    return 1 + convs_per_level * (kernel_size - 1) * sum(dilations)


def receptive_field(model: ModelState) -> int:
    c = model.config
    per_level = c.convs_per_block if model.arch == "tcn" else 1
    return compute_receptive_field(c.kernel_size, c.dilations, per_level)


def is_decayed(name: str) -> bool:
    """L2 applies to conv weights and weight-norm directions only."""
    return name.endswith(".w") or name.endswith(".v")


def _he_uniform(rng, shape):
    fan_in = int(np.prod(shape[1:]))
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape).astype(np.float32)


def _conv_params(params, rng, name, cout, cin, k, bias=True):
    params[f"{name}.w"] = _he_uniform(rng, (cout, cin, k))
    if bias:
        params[f"{name}.b"] = np.zeros(cout, np.float32)


def build_wavenet(config: WaveNetConfig | None = None, rng: np.random.Generator | int = 0) -> ModelState:
    config = config or WaveNetConfig()
    rng = np.random.default_rng(rng)
    F, H = config.filters, config.head_filters
    p: dict[str, np.ndarray] = {}
    _conv_params(p, rng, "entry", F, 1, 1)
    for i, _ in enumerate(config.dilations):
        _conv_params(p, rng, f"block{i}.conv", F, F, config.kernel_size)
        if config.skip_projection:
            _conv_params(p, rng, f"block{i}.skip", F, F, 1)
    _conv_params(p, rng, "head1", H, F, 1)
    _conv_params(p, rng, "head2", config.num_classes, H, 1)
    return ModelState("wavenet", config, p)


def build_tcn(config: TCNConfig | None = None, rng: np.random.Generator | int = 0) -> ModelState:
    config = config or TCNConfig()
    rng = np.random.default_rng(rng)
    F, k = config.filters, config.kernel_size
    p: dict[str, np.ndarray] = {}
    cin = 1
    for i, _ in enumerate(config.dilations):
        for j in range(config.convs_per_block):
            v = _he_uniform(rng, (F, cin if j == 0 else F, k))
            p[f"block{i}.conv{j}.v"] = v
            p[f"block{i}.conv{j}.g"] = np.sqrt((v.astype(np.float64) ** 2).sum(axis=(1, 2))).astype(np.float32)
        if cin != F:
            _conv_params(p, rng, f"block{i}.proj", F, cin, 1)
        p[f"block{i}.ln.gamma"] = np.ones(F, np.float32)
        p[f"block{i}.ln.beta"] = np.zeros(F, np.float32)
        cin = F
    _conv_params(p, rng, "head1", config.head_filters, F, 1)
    _conv_params(p, rng, "head2", config.num_classes, config.head_filters, 1)
    return ModelState("tcn", config, p)


def build_model(arch: str, config=None, rng=0) -> ModelState:
    if arch == "wavenet":
        return build_wavenet(config, rng)
    if arch == "tcn":
        return build_tcn(config, rng)
    raise ConfigurationError(f"unknown architecture {arch!r}")


def parameter_count(arch: str, config) -> int:
    """Closed-form parameter count, independent of any built instance."""
    nc = config.num_classes
    if arch == "wavenet":
        F, H, k, n = config.filters, config.head_filters, config.kernel_size, len(config.dilations)
        per_block = F * F * k + F + (F * F + F if config.skip_projection else 0)
        return (F + F) + n * per_block + (H * F + H) + (nc * H + nc)
    if arch == "tcn":
        F, k, n = config.filters, config.kernel_size, len(config.dilations)
        first = (F * 1 * k + F) + (F * F * k + F) + (2 * F if F != 1 else 0) + 2 * F
        rest = 2 * (F * F * k + F) + 2 * F
        H = config.head_filters
        return first + (n - 1) * rest + (H * F + H) + (nc * H + nc)
    raise ConfigurationError(f"unknown architecture {arch!r}")


class _Params:
    """Resolves parameter names to tensors, watching them on the tape if given."""

    def __init__(self, params, tape: Tape | None, dtype):
        self.params, self.tape, self.dtype = params, tape, dtype
        self.cache: dict[str, Tensor] = {}

    def __getitem__(self, name) -> Tensor:
        if name not in self.cache:
            arr = self.params[name].astype(self.dtype, copy=False)
            self.cache[name] = self.tape.watch(arr, name) if self.tape is not None else Tensor(arr)
        return self.cache[name]

    def get(self, name):
        return self[name] if name in self.params else None


def _conv(P, name, x, d=1):
    w = P[f"{name}.w"]
    spec = L.ConvSpec(w.shape[1], w.shape[0], w.shape[2], d)
    return L.causal_dilated_conv1d(x, spec, w, P.get(f"{name}.b"))


def _prepare_input(batch, dtype, normalize: bool) -> Tensor:
    x = np.asarray(batch)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != 1:
        raise ShapeError(f"expected batch [B,T,1], got {x.shape}")
    if normalize:
        x = zscore_normalize(x[:, :, 0].astype(dtype))[:, :, None]
    return Tensor(x.astype(dtype, copy=False))


def _wavenet_features(model, P, x, training, rate, rng):
    c = model.config
    h = _conv(P, "entry", x)
    skip = None
    for i, d in enumerate(c.dilations):
        o = L.swish(_conv(P, f"block{i}.conv", h, d=d))
        s = _conv(P, f"block{i}.skip", o) if c.skip_projection else o
        skip = s if skip is None else L.add(skip, s)
        h = L.add(h, o)
    z = L.swish(_conv(P, "head1", skip))
    z = L.dropout(z, rate, training, rng)
    return _conv(P, "head2", z)


def _tcn_features(model, P, x, training, rate, rng):
    c = model.config
    h = x
    for i, d in enumerate(c.dilations):
        o = h
        for j in range(c.convs_per_block):
            w = L.weight_normalized_weights(P[f"block{i}.conv{j}.v"], P[f"block{i}.conv{j}.g"])
            spec = L.ConvSpec(w.shape[1], w.shape[0], w.shape[2], d, weight_normalized=True)
            o = L.relu(L.causal_dilated_conv1d(o, spec, w))
            o = L.dropout(o, c.block_dropout, training, rng)
        res = _conv(P, f"block{i}.proj", h) if f"block{i}.proj.w" in model.params else h
        h = L.layer_norm(L.add(o, res), P[f"block{i}.ln.gamma"], P[f"block{i}.ln.beta"])
    z = L.relu(_conv(P, "head1", h))
    return _conv(P, "head2", z)


def features(model: ModelState, batch, training=False, dropout_rate=None, tape=None, rng=None,
             dtype=np.float32, normalize=True) -> Tensor:
    """Per-timestep class logits ``[B,T,num_classes]`` before pooling.

    ``normalize=False`` skips the input z-score so causality probes see the
    raw network (the z-score mixes statistics of the whole window).
    """
    x = _prepare_input(batch, dtype, normalize)
    P = _Params(model.params, tape, dtype)
    if model.arch == "wavenet":
        rate = model.config.dropout_rate if dropout_rate is None else dropout_rate
        return _wavenet_features(model, P, x, training, rate, rng)
    if model.arch == "tcn":
        return _tcn_features(model, P, x, training, 0.0, rng)
    raise ConfigurationError(f"unknown architecture {model.arch!r}")


def forward(model: ModelState, batch, training: bool = False, dropout_rate: float | None = None,
            tape: Tape | None = None, rng: np.random.Generator | None = None, dtype=np.float32) -> Tensor:
    """Class probabilities ``[B, num_classes]`` for a batch ``[B,T,1]`` (or ``[B,T]``).

    ``dropout_rate`` overrides the WaveNet's adaptive rate; the TCN always uses
    its fixed block dropout.
    """
    logits = features(model, batch, training, dropout_rate, tape, rng, dtype)
    return L.softmax(L.global_average_pool(logits))


def predict_proba(model: ModelState, signals, batch_size: int = 64) -> np.ndarray:
    signals = np.asarray(signals)
    out = [forward(model, signals[i:i + batch_size]).data for i in range(0, len(signals), batch_size)]
    if not out:
        return np.zeros((0, model.config.num_classes), np.float32)
    return np.concatenate(out)
