"""Greedy decoding with a key/value cache.

All sequences of a batch advance one position per step. A sequence is fed
its own prompt (words, SEP, PAT_START) until the prompt is exhausted and its
own greedy outputs afterwards, so every row keeps absolute positions and no
padding ever enters an attention window.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..autodiff.ops import LN_EPS, _GELU_C
from ..tokenizer import PAT_END, PAT_START, SEP, P, TokenStream, arity_mask
from .network import _GROUP_SUM, Model, cross_kv, encode_images, type_mask

__all__ = ["generate", "generate_batch", "DEFAULT_MAX_LEN"]

DEFAULT_MAX_LEN = 96


def _ln(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc * (1.0 / np.sqrt(var + x.dtype.type(LN_EPS))) * g + b


def _gelu(x):
    c = x.dtype.type(_GELU_C)
    k = x.dtype.type(0.044715)
    return 0.5 * x * (1 + np.tanh(c * (x + k * x**3)))


def _softmax(s):
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def generate_batch(model: Model, enc: np.ndarray, texts: Sequence[Sequence[int]],
                   max_len: int = DEFAULT_MAX_LEN) -> list[TokenStream]:
    """Greedy streams (starting at PAT_START) for a batch of prompts.

    ``enc`` holds the cached encoder output for each row. Each stream stops
    at PAT_END, after ``max_len`` tokens, or at the model's ``max_seq``.
    Parameters beyond an emitted token's arity are written as 0.
    """
    cfg = model.config
    w = {n: t.data for n, t in model.params.items()}
    dt = model.dtype
    bsz = len(texts)
    d, h = cfg.d_model, cfg.n_heads
    dh = d // h
    prefixes = [list(t) + [SEP, PAT_START] for t in texts]
    lens = np.array([len(p) for p in prefixes])
    horizon = int(min(cfg.max_seq, lens.max() + max_len - 1))
    xkv = [cross_kv(model, np.asarray(enc, dtype=dt), i) for i in range(cfg.n_layers)]
    kc = np.zeros((cfg.n_layers, bsz, h, horizon, dh), dtype=dt)
    vc = np.zeros_like(kc)
    streams_tok = [[PAT_START] for _ in range(bsz)]
    streams_par = [[np.zeros(P)] for _ in range(bsz)]
    done = np.zeros(bsz, dtype=bool)
    cur_tok = np.array([p[0] for p in prefixes], dtype=np.int64)
    cur_par = np.zeros((bsz, P), dtype=dt)
    inv = dt.type(1.0 / math.sqrt(dh))
    group_sum = _GROUP_SUM.astype(dt)
    for t in range(horizon):
        x = w["tok_emb"][cur_tok] + (cur_par @ w["param_in.w"] + w["param_in.b"]) + w["pos_emb"][t]
        for i in range(cfg.n_layers):
            pre = f"dec.{i}"
            y = _ln(x, w[pre + ".ln1.g"], w[pre + ".ln1.b"])
            q = (y @ w[pre + ".attn.wq"] + w[pre + ".attn.bq"]).reshape(bsz, h, 1, dh)
            kc[i, :, :, t] = (y @ w[pre + ".attn.wk"] + w[pre + ".attn.bk"]).reshape(bsz, h, dh)
            vc[i, :, :, t] = (y @ w[pre + ".attn.wv"] + w[pre + ".attn.bv"]).reshape(bsz, h, dh)
            s = (q @ np.swapaxes(kc[i, :, :, :t + 1], -1, -2)) * inv
            a = (_softmax(s) @ vc[i, :, :, :t + 1]).reshape(bsz, d)
            x = x + (a @ w[pre + ".attn.wo"] + w[pre + ".attn.bo"])
            y = _ln(x, w[pre + ".xattn.ln.g"], w[pre + ".xattn.ln.b"])
            q = (y @ w[pre + ".xattn.wq"] + w[pre + ".xattn.bq"]).reshape(bsz, h, 1, dh)
            k, v = xkv[i]
            a = (_softmax((q @ np.swapaxes(k, -1, -2)) * inv) @ v).reshape(bsz, d)
            x = x + (a @ w[pre + ".xattn.wo"] + w[pre + ".xattn.bo"])
            y = _ln(x, w[pre + ".ln2.g"], w[pre + ".ln2.b"])
            x = x + (_gelu(y @ w[pre + ".mlp.w1"] + w[pre + ".mlp.b1"]) @ w[pre + ".mlp.w2"] + w[pre + ".mlp.b2"])
        y = _ln(x, w["lnf.g"], w["lnf.b"])
        logits = y @ w["head.w"] + w["head.b"]
        groups = _gelu(x @ w["reg.w1"] + w["reg.b1"]) @ w["reg.w2"] + w["reg.b2"]
        nxt = logits.argmax(axis=-1)
        reg = (groups * type_mask(nxt, dt)) @ group_sum
        for b in range(bsz):
            if t + 1 < lens[b]:
                cur_tok[b] = prefixes[b][t + 1]
                cur_par[b] = 0
                continue
            if done[b]:
                continue
            tok = int(nxt[b])
            par = np.where(arity_mask(np.array([tok]))[0], reg[b].astype(np.float64), 0.0)
            streams_tok[b].append(tok)
            streams_par[b].append(par)
            cur_tok[b] = tok
            cur_par[b] = par
            if tok == PAT_END or len(streams_tok[b]) >= max_len:
                done[b] = True
        if done.all():
            break
    return [TokenStream(np.array(tk, dtype=np.int64), np.array(pr, dtype=np.float64))
            for tk, pr in zip(streams_tok, streams_par)]


def generate(model: Model, image: np.ndarray, text_tokens: Sequence[int],
             max_len: int = DEFAULT_MAX_LEN) -> TokenStream:
    return generate_batch(model, encode_images(model, image), [text_tokens], max_len)[0]
