"""Layer primitives with hand-written backward rules.

Every op takes :class:`Tensor` inputs and returns a :class:`Tensor`. When any
input lives on a tape the op records itself; otherwise it is pure numpy.
Sequence tensors are laid out ``[batch, time, channels]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .autodiff import Tensor, as_tensor, tape_of
from .errors import ConfigurationError, DegenerateParameterError, ShapeError

LAYER_NORM_EPS = 1e-5


def _emit(inputs, out: np.ndarray, backward) -> Tensor:
    tape = tape_of(*inputs)
    if tape is None:
        return Tensor(out)
    return tape.record(inputs, out, backward)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    causal: bool = True
    weight_normalized: bool = False

    def __post_init__(self):
        if self.dilation < 1:
            raise ConfigurationError(f"dilation must be >= 1, got {self.dilation}")
        if min(self.in_channels, self.out_channels, self.kernel_size) < 1:
            raise ConfigurationError(f"conv sizes must be positive: {self}")

    @property
    def weight_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_size)

    @property
    def reach(self) -> int:
        """Number of past steps (besides the current one) this conv can see."""
        return (self.kernel_size - 1) * self.dilation


def causal_dilated_conv1d(x: Tensor, spec: ConvSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Causal dilated convolution, zero left-padding of ``(k-1)*d`` steps.

    Tap ``j`` of the kernel reads ``x[t - (k-1-j)*d]``, so the last tap is the
    current sample. Output length equals input length. No activation.
    """
    if not spec.causal:
        raise ConfigurationError("only causal convolutions are supported")
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.shape != spec.weight_shape:
        raise ConfigurationError(f"weight shape {weight.shape} does not match {spec.weight_shape}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (spec.out_channels,):
            raise ConfigurationError(f"bias shape {bias.shape} != ({spec.out_channels},)")
    if x.data.ndim != 3 or x.shape[2] != spec.in_channels:
        raise ShapeError(f"expected input [B,T,{spec.in_channels}], got {x.shape}")
    B, T, cin = x.shape
    if T < 1:
        raise ShapeError("empty sequence")
    k, d = spec.kernel_size, spec.dilation
    pad = spec.reach
    xd, wd = x.data, weight.data
    cout = spec.out_channels
    xp = np.concatenate([np.zeros((B, pad, cin), dtype=xd.dtype), xd], axis=1) if pad else xd
    # im2col: one GEMM over all taps; column block j holds tap j
    if k == 1:
        cols = xd.reshape(B * T, cin)
    else:
        cols = np.concatenate([xp[:, j * d:j * d + T, :] for j in range(k)], axis=2).reshape(B * T, k * cin)
    wmat = wd.transpose(2, 1, 0).reshape(k * cin, cout)
    out = cols @ wmat
    if bias is not None:
        out += bias.data
    out = out.reshape(B, T, cout)

    def backward(g):
        g2 = g.reshape(B * T, cout)
        gw = (cols.T @ g2).reshape(k, cin, cout).transpose(2, 1, 0)
        gcols = (g2 @ wmat.T).reshape(B, T, k, cin)
        if k == 1:
            gx = gcols[:, :, 0, :]
        else:
            gxp = np.zeros_like(xp)
            for j in range(k):
                gxp[:, j * d:j * d + T, :] += gcols[:, :, j, :]
            gx = gxp[:, pad:, :]
        grads = [gx, np.ascontiguousarray(gw)]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return _emit(inputs, out, backward)


def weight_normalized_weights(direction: Tensor, gain: Tensor) -> Tensor:
    """``gain * direction / ||direction||`` per output filter (axis 0)."""
    direction, gain = as_tensor(direction), as_tensor(gain)
    v = direction.data
    if gain.shape != (v.shape[0],):
        raise ShapeError(f"gain shape {gain.shape} needs one scalar per filter ({v.shape[0]})")
    axes = tuple(range(1, v.ndim))
    norm = np.sqrt(np.sum(v * v, axis=axes, keepdims=True))
    if np.any(norm == 0):
        raise DegenerateParameterError("weight-norm direction has zero norm")
    u = v / norm
    gshape = (-1,) + (1,) * (v.ndim - 1)
    out = gain.data.reshape(gshape) * u

    def backward(g):
        proj = np.sum(g * u, axis=axes)
        gv = gain.data.reshape(gshape) / norm * (g - u * proj.reshape(gshape))
        return gv, proj

    return _emit([direction, gain], out, backward)


def swish(x: Tensor) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    s = expit(xd)
    out = xd * s

    def backward(g):
        return (g * (s + xd * s * (1 - s)),)

    return _emit([x], out, backward)



def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _emit([x], x.data * mask, lambda g: (g * mask,))


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    return _emit([a, b], a.data + b.data, lambda g: (g, g))


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each position across channels, then apply ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    C = xd.shape[-1]

    def backward(g):
        red = tuple(range(g.ndim - 1))
        ggamma = np.sum(g * xhat, axis=red)
        gbeta = np.sum(g, axis=red)
        gx_hat = g * gamma.data
        gx = inv / C * (C * gx_hat - gx_hat.sum(-1, keepdims=True) - xhat * np.sum(gx_hat * xhat, -1, keepdims=True))
        return gx, ggamma, gbeta

    return _emit([x, gamma, beta], out, backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` at train time."""
    if not 0 <= rate < 1:
        raise ConfigurationError(f"dropout rate must be in [0,1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0:
        return x
    if rng is None:
        raise ConfigurationError("training-mode dropout needs a seeded generator")
    keep = rng.random(x.shape, dtype=np.float32) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    return _emit([x], x.data * scale, lambda g: (g * scale,))


def global_average_pool(x: Tensor) -> Tensor:
    """Mean over the time axis: ``[B,T,C] -> [B,C]``."""
    x = as_tensor(x)
    if x.data.ndim != 3 or x.shape[1] < 1:
        raise ShapeError(f"expected [B,T,C] with T>=1, got {x.shape}")
    T = x.shape[1]
    out = x.data.mean(axis=1)
    return _emit([x], out, lambda g: (np.broadcast_to(g[:, None, :] / T, x.shape).copy(),))


def softmax(x: Tensor) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return _emit([x], y, backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` for ``x`` of shape ``[B, D]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    out = x.data @ weight.data
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data

    def backward(g):
        grads = [g @ weight.data.T, x.data.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    inputs = [x, weight] + ([bias] if bias is not None else [])
    return _emit(inputs, out, backward)


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    x = as_tensor(x)
    return _emit([x], np.asarray(x.data.sum()), lambda g: (np.full(x.shape, g, dtype=x.dtype),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
    return _emit([a, b], a.data * b.data, lambda g: (g * b.data, g * a.data))
