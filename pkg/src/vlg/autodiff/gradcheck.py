"""Central-difference gradient checker (64-bit)."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tape, Tensor

__all__ = ["grad_check", "numeric_grad"]


def numeric_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f(Tensor(x.copy())).item()
        flat[i] = old - eps
        lo = f(Tensor(x.copy())).item()
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    The denominator per coordinate is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    x = np.array(x, dtype=np.float64)
    leaf = Tensor(x.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
    tape.backward(out)
    analytic = leaf.grad
    numeric = numeric_grad(f, x, eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
