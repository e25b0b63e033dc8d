"""Differentiable dense ops.

Broadcasting is limited to leading-batch expansion: in binary ops the second
operand's shape must equal the first's or be a suffix of it (a bias row, a
weight matrix shared across the batch). Softmax and layernorm act on the last
axis.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import IdError, ShapeError
from .tensor import Tensor, active_tape

__all__ = [
    "matmul", "add", "sub", "mul", "scale", "concat", "slice_", "reshape", "transpose",
    "sum_", "mean", "embedding_gather", "softmax", "layernorm", "gelu", "causal_mask_fill",
    "cross_entropy", "mse_masked", "linear", "as_tensor", "MASK_FILL",
]

LN_EPS = 1e-5
MASK_FILL = -1e9
_GELU_C = math.sqrt(2.0 / math.pi)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=False)
    if track:
        out.requires_grad = True
        tape.record(out, inputs, backward)
    return out


def _check_suffix(a: Tensor, b: Tensor, op: str) -> int:
    """Number of leading dims of ``a`` that ``b`` is expanded over."""
    na, nb = a.data.ndim, b.data.ndim
    if nb > na or a.shape[na - nb:] != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are incompatible")
    return na - nb


def _reduce_lead(g: np.ndarray, lead: int) -> np.ndarray:
    return g.sum(axis=tuple(range(lead))) if lead else g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    lead = _check_suffix(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, _reduce_lead(g, lead)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    lead = _check_suffix(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -_reduce_lead(g, lead)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    lead = _check_suffix(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g):
        ga = g * bd if a.requires_grad else None
        gb = _reduce_lead(g * ad, lead) if b.requires_grad else None
        return ga, gb

    return _result(ad * bd, (a, b), back)


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    s = a.data.dtype.type(s)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def matmul(a, b) -> Tensor:
    """``(..., n, k) @ (k, m)`` or batched ``(..., n, k) @ (..., k, m)``."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    shared = bd.ndim == 2
    if not shared and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul: batch shapes {a.shape} and {b.shape} differ")

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            if shared:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _result(ad @ bd, (a, b), back)


def linear(x, w, b=None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    ax = axis % ts[0].data.ndim
    for t in ts[1:]:
        if t.data.ndim != ts[0].data.ndim or any(
                t.shape[i] != ts[0].shape[i] for i in range(t.data.ndim) if i != ax):
            raise ShapeError(f"concat: shapes {[t.shape for t in ts]} differ off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def back(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(ts)))

    return _result(np.concatenate([t.data for t in ts], axis=ax), ts, back)


def slice_(a, index) -> Tensor:
    """Basic (non-fancy) indexing, e.g. ``slice_(x, (slice(None), 3))``."""
    a = as_tensor(a)
    shape, dtype = a.shape, a.data.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        full[index] = g
        return (full,)

    return _result(a.data[index], (a,), back)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def sum_(a) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _result(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a) -> Tensor:
    a = as_tensor(a)
    return scale(sum_(a), 1.0 / a.size)


def embedding_gather(table, ids) -> Tensor:
    table = as_tensor(table)
    ids = np.asarray(ids)
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IdError(f"embedding ids must lie in [0, {n}), got range [{ids.min()}, {ids.max()}]")

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _result(table.data[ids], (table,), back)


def softmax(a) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (a,), back)


def layernorm(a, gamma, beta, eps: float = LN_EPS) -> Tensor:
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    lead = x.ndim - 1
    d = x.shape[-1]

    def back(g):
        gg = g * gamma.data
        ga = None
        if a.requires_grad:
            ga = inv / d * (d * gg - gg.sum(axis=-1, keepdims=True)
                            - xhat * (gg * xhat).sum(axis=-1, keepdims=True))
        ggamma = _reduce_lead(g * xhat, lead) if gamma.requires_grad else None
        gbeta = _reduce_lead(g, lead) if beta.requires_grad else None
        return ga, ggamma, gbeta

    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layernorm: gain/bias must have shape ({d},)")
    return _result(xhat * gamma.data + beta.data, (a, gamma, beta), back)


def gelu(a) -> Tensor:
    """Tanh approximation of GELU."""
    a = as_tensor(a)
    x = a.data
    c = x.dtype.type(_GELU_C)
    k = x.dtype.type(0.044715)
    u = c * (x + k * x**3)
    t = np.tanh(u)
    y = 0.5 * x * (1 + t)

    def back(g):
        du = c * (1 + 3 * k * x * x)
        return (g * (0.5 * (1 + t) + 0.5 * x * (1 - t * t) * du),)

    return _result(y, (a,), back)


def causal_mask_fill(scores, fill: float = MASK_FILL) -> Tensor:
    """Replace entries ``[..., i, j]`` with ``j > i`` by ``fill``."""
    s = as_tensor(scores)
    t, u = s.shape[-2], s.shape[-1]
    future = np.triu(np.ones((t, u), dtype=bool), k=1 + (u - t))
    out = np.where(future, s.data.dtype.type(fill), s.data)
    return _result(out, (s,), lambda g: (np.where(future, 0, g).astype(g.dtype),))


def cross_entropy(logits, targets, mask: Optional[np.ndarray] = None,
                  normalizer: Optional[float] = None) -> Tensor:
    """Mean negative log-likelihood over positions where ``mask`` is true.

    ``normalizer`` overrides the divisor (the count of unmasked positions),
    which lets micro-batches share one effective-batch denominator.
    """
    lg = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if lg.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {lg.shape} vs targets {targets.shape}")
    v = lg.shape[-1]
    m = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    live = targets[m]
    if live.size and (live.min() < 0 or live.max() >= v):
        raise IdError(f"target ids must lie in [0, {v})")
    x = lg.data
    z = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    safe = np.where(m, targets, 0)
    picked = np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    denom = float(m.sum()) if normalizer is None else float(normalizer)
    denom = max(denom, 1.0)
    loss = -(picked * m).sum() / denom

    def back(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        return ((p - onehot) * (m[..., None] * (g / denom)).astype(p.dtype),)

    return _result(np.asarray(loss, dtype=x.dtype), (lg,), back)


def mse_masked(pred, target, mask, normalizer: Optional[float] = None) -> Tensor:
    """Mean squared error over entries where ``mask`` is true (0 if none)."""
    p = as_tensor(pred)
    t = np.asarray(target, dtype=p.data.dtype)
    m = np.asarray(mask, dtype=bool)
    if p.shape != t.shape or p.shape != m.shape:
        raise ShapeError(f"mse_masked: shapes {p.shape}, {t.shape}, {m.shape} differ")
    denom = float(m.sum()) if normalizer is None else float(normalizer)
    denom = max(denom, 1.0)
    diff = np.where(m, p.data - t, 0).astype(p.data.dtype)
    loss = (diff * diff).sum() / denom
    return _result(np.asarray(loss, dtype=p.data.dtype), (p,),
                   lambda g: (diff * (2 * g / denom),))
