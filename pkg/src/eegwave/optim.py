"""Focal loss, inverse-frequency class weights, Adam with coupled L2, accumulation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor, as_tensor
from .errors import ConfigurationError, ContractError, InputError, NumericalError
from .layers import _emit

LOG_CLAMP = 1e-12


def class_weights_inverse_frequency(counts) -> np.ndarray:
    """``w_c = N / (C * N_c)``; unnormalized."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts <= 0):
        raise ConfigurationError(f"every class needs at least one sample, got counts {counts.tolist()}")
    return counts.sum() / (len(counts) * counts)


@dataclass
class FocalLossConfig:
    gamma: float = 2.0
    alpha: np.ndarray | None = None  # None means all ones
    epsilon: float = LOG_CLAMP

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigurationError("gamma must be >= 0")
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=np.float64)
            if np.any(self.alpha <= 0):
                raise ConfigurationError("alpha entries must be > 0")

    def alpha_for(self, num_classes: int) -> np.ndarray:
        if self.alpha is None:
            return np.ones(num_classes)
        if len(self.alpha) != num_classes:
            raise ConfigurationError(f"alpha has {len(self.alpha)} entries, expected {num_classes}")
        return self.alpha


def _check_labels(labels, batch, num_classes):
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise InputError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.dtype.kind not in "iu" or labels.min(initial=0) < 0 or labels.max(initial=0) >= num_classes:
        raise InputError(f"label ids must be integers in [0, {num_classes})")
    return labels.astype(np.int64)


def focal_loss_per_sample(probs, labels, config: FocalLossConfig | None = None) -> np.ndarray:
    config = config or FocalLossConfig()
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, len(probs), probs.shape[1])
    alpha = config.alpha_for(probs.shape[1])
    p = probs[np.arange(len(labels)), labels]
    return -alpha[labels] * (1.0 - p) ** config.gamma * np.log(np.maximum(p, config.epsilon))


def focal_loss(probs: Tensor, labels, config: FocalLossConfig | None = None) -> Tensor:
    """Mean over the batch of ``-alpha_y (1 - p_y)^gamma log p_y``.

    Differentiable with respect to ``probs``; the log is clamped at
    ``config.epsilon`` and the clamped region has zero gradient.
    """
    config = config or FocalLossConfig()
    probs = as_tensor(probs)
    pd = probs.data
    B, C = pd.shape
    labels = _check_labels(labels, B, C)
    alpha = config.alpha_for(C).astype(pd.dtype)
    rows = np.arange(B)
    p = pd[rows, labels]
    a = alpha[labels]
    gam = config.gamma
    q = 1.0 - p
    logp = np.log(np.maximum(p, config.epsilon))
    loss = np.asarray(np.mean(-a * q ** gam * logp), dtype=pd.dtype)

    def backward(g):
        dlog = np.where(p > config.epsilon, 1.0 / np.maximum(p, config.epsilon), 0.0)
        if gam == 0:
            dq = 0.0
        else:
            dq = -gam * q ** (gam - 1) * logp
        dp = -a * (dq + q ** gam * dlog) / B
        out = np.zeros_like(pd)
        out[rows, labels] = g * dp
        return (out,)

    return _emit([probs], loss, backward)


def cross_entropy(probs, labels) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, len(probs), probs.shape[1])
    return float(np.mean(-np.log(np.maximum(probs[np.arange(len(labels)), labels], LOG_CLAMP))))


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_lambda: float = 1e-4
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              decayed: Callable[[str], bool] = lambda name: True) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``.

    L2 is coupled: ``l2_lambda * w`` is added to the gradient of every
    parameter for which ``decayed(name)`` holds, before the moment updates.
    """
    missing = set(params) - set(grads)
    if missing:
        raise ContractError(f"no gradient for {sorted(missing)}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for name, w in params.items():
        g = grads[name].astype(np.float64)
        if state.l2_lambda and decayed(name):
            g = g + state.l2_lambda * w
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
        params[name] = (w - update).astype(w.dtype)


def accumulate_gradients(micro_grads: list[dict[str, np.ndarray]], sizes=None) -> dict[str, np.ndarray]:
    """Elementwise mean of per-micro-batch gradient maps.

    ``sizes`` weights each map by its micro-batch size, so a ragged final
    micro-batch still reproduces the gradient of the combined batch.
    """
    if not micro_grads:
        raise ContractError("nothing to accumulate")
    keys = set(micro_grads[0])
    for g in micro_grads[1:]:
        if set(g) != keys:
            raise ContractError("gradient maps have different parameter names")
        for k in keys:
            if g[k].shape != micro_grads[0][k].shape:
                raise ContractError(f"shape mismatch for {k!r}")
    w = np.ones(len(micro_grads)) if sizes is None else np.asarray(sizes, dtype=np.float64)
    if len(w) != len(micro_grads):
        raise ContractError("one size per gradient map required")
    w = w / w.sum()
    return {k: sum(wi * g[k].astype(np.float64) for wi, g in zip(w, micro_grads)) for k in micro_grads[0]}
