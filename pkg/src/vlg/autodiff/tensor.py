"""Tensor values and the tape that records operations for reverse mode."""

from __future__ import annotations

import threading
from typing import Callable, Optional

import numpy as np

from ..errors import NotScalarError, StaleTapeError

__all__ = ["Tensor", "Tape", "active_tape", "tensor"]

_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def active_tape() -> Optional["Tape"]:
    s = _stack()
    return s[-1] if s else None


class Tensor:
    """Dense array plus an optional gradient buffer.

    ``data`` keeps its dtype (float32 for training, float64 for gradient
    checks). Leaves created with ``requires_grad=True`` carry a zeroed
    ``grad`` buffer that :meth:`Tape.backward` accumulates into.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype.kind in "iub":
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._node = None  # index on the recording tape for non-leaves

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operator sugar; the functional ops in .ops are the real interface
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __mul__(self, other):
        from .ops import mul, scale
        return scale(self, other) if np.isscalar(other) else mul(self, other)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def tensor(data, requires_grad: bool = False, dtype=np.float32, name: str = "") -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad, name)


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; ops executed inside it whose inputs require
    gradients are appended. :meth:`backward` may run only once per tape.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.used = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        """``backward(g)`` returns one gradient (or None) per input."""
        if self.used:
            raise StaleTapeError("tape already consumed by backward()")
        out._node = (id(self), len(self.nodes))
        self.nodes.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if self.used:
            raise StaleTapeError("backward() already ran on this tape; record a new one")
        if loss.size != 1:
            raise NotScalarError(f"loss must be scalar, got shape {loss.shape}")
        if loss._node is None or loss._node[0] != id(self):
            raise ValueError("loss was not produced on this tape")
        self.used = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, fn in reversed(self.nodes[: loss._node[1] + 1]):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp._node is None:  # leaf
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad += gi
                else:
                    key = id(inp)
                    if key in grads:
                        grads[key] = grads[key] + gi
                    else:
                        grads[key] = gi
        self.nodes.clear()
