"""Minimal reverse-mode autodiff over numpy arrays.

A :class:`Tape` records every operation executed on tensors bound to it.
Because recording happens in execution order, the node list is already
topologically sorted and ``backward`` is a single reverse sweep.

Tensors without a tape are constants: operations on them are plain numpy
and nothing is recorded, which keeps inference cheap.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError

_ids = itertools.count()


class Tensor:
    """Dense float array plus bookkeeping for the tape.

    ``data`` is a contiguous numpy array (row-major); ``shape`` and ``dtype``
    mirror it.
    """

    __slots__ = ("data", "id", "tape", "name")

    def __init__(self, data, tape: "Tape | None" = None, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr if arr.flags.c_contiguous else np.ascontiguousarray(arr)
        self.id = next(_ids)
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


@dataclass
class Node:
    inputs: tuple[int, ...]
    output: int
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)
    watched: dict[str, Tensor] = field(default_factory=dict)

    def watch(self, array, name: str) -> Tensor:
        """Bind a trainable array to this tape under a unique name."""
        if name in self.watched:
            raise ContractError(f"parameter {name!r} watched twice")
        t = Tensor(array, tape=self, name=name)
        self.watched[name] = t
        return t

    def record(self, inputs: Sequence[Tensor], out_data: np.ndarray, backward) -> Tensor:
        out = Tensor(out_data, tape=self)
        self.nodes.append(Node(tuple(t.id for t in inputs), out.id, backward))
        return out

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Reverse sweep from a scalar ``loss``.

        Returns a gradient for every watched parameter, zeros for parameters
        the loss does not depend on.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise ContractError("loss was not computed on this tape")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(node.output, None)
            if g is None:
                continue
            for tid, gi in zip(node.inputs, node.backward(g)):
                if gi is None:
                    continue
                if tid in grads:
                    grads[tid] = grads[tid] + gi
                else:
                    grads[tid] = gi
        out = {}
        for name, t in self.watched.items():
            g = grads.get(t.id)
            out[name] = np.zeros_like(t.data) if g is None else g.reshape(t.shape).astype(t.dtype, copy=False)
        return out


def tape_of(*tensors: Tensor) -> Tape | None:
    """The shared tape of the inputs, or None when all are constants."""
    tape = None
    for t in tensors:
        if t is not None and t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError("tensors from different tapes mixed in one op")
            tape = t.tape
    return tape


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def finite_difference_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one element at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad
