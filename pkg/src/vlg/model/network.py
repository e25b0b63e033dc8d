"""The toy vision-language-garment transformer.

Layout of one sequence: prompt word ids, SEP, then the garment token stream
(PAT_START ... PAT_END). Every position embeds its token id, its own 7-vector
of continuous parameters (through a linear injection map) and its position.
Decoder blocks are pre-norm: causal self-attention, cross-attention over the
64 visual tokens of the frozen encoder, then an MLP. Two heads read each
position: token logits (vocabulary) and a regression head for the next
token's parameters whose output layers start at exactly zero.

Encoder parameters (prefix ``enc.``) and every cross-attention parameter
(``dec.<l>.xattn.``, its layer norm included) are frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..autodiff import ops
from ..autodiff.tensor import Tensor
from ..errors import LengthError, ShapeError, VocabError
from ..tokenizer import (EDGE_CURVE, EDGE_LINE, PAD, PANEL_START, PLACEMENT, SEP, STITCH, P,
                         TokenStream, arity_mask)
from .config import ModelConfig

__all__ = ["PARAM_TOKENS", "N_TYPES", "type_mask", "Model", "Batch", "build_model", "make_batch", "encode_images", "forward",
           "forward_batch", "loss", "is_frozen", "param_names", "sequence_of"]


# The regression head has one P-wide output group per parameter-carrying
# token type; a position reports the group of the token it predicts.
PARAM_TOKENS = (PANEL_START, PLACEMENT, EDGE_LINE, EDGE_CURVE, STITCH)
N_TYPES = len(PARAM_TOKENS)
_GROUP_SUM = np.tile(np.eye(P), (N_TYPES, 1))  # (N_TYPES * P, P)
ZERO_INIT = ("reg.w2", "reg.b2")


def type_mask(tokens: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(..., N_TYPES * P) indicator of the output group selected by each token."""
    tokens = np.asarray(tokens)
    out = np.zeros(tokens.shape + (N_TYPES, P), dtype=dtype)
    for k, tok in enumerate(PARAM_TOKENS):
        out[..., k, :] = tokens[..., None] == tok
    return out.reshape(tokens.shape + (N_TYPES * P,))


def is_frozen(name: str) -> bool:
    return name.startswith("enc.") or ".xattn." in name


def _block_shapes(prefix: str, d: int, hidden: int, cross: bool) -> list[tuple[str, tuple]]:
    out = [(f"{prefix}.ln1.g", (d,)), (f"{prefix}.ln1.b", (d,))]
    for k in ("q", "k", "v", "o"):
        out += [(f"{prefix}.attn.w{k}", (d, d)), (f"{prefix}.attn.b{k}", (d,))]
    if cross:
        out += [(f"{prefix}.xattn.ln.g", (d,)), (f"{prefix}.xattn.ln.b", (d,))]
        for k in ("q", "k", "v", "o"):
            out += [(f"{prefix}.xattn.w{k}", (d, d)), (f"{prefix}.xattn.b{k}", (d,))]
    out += [(f"{prefix}.ln2.g", (d,)), (f"{prefix}.ln2.b", (d,)),
            (f"{prefix}.mlp.w1", (d, hidden)), (f"{prefix}.mlp.b1", (hidden,)),
            (f"{prefix}.mlp.w2", (hidden, d)), (f"{prefix}.mlp.b2", (d,))]
    return out


def param_names(cfg: ModelConfig) -> list[tuple[str, tuple]]:
    """Every parameter name and shape, in initialization order."""
    d, h = cfg.d_model, cfg.d_model * cfg.mlp_ratio
    px = cfg.patch * cfg.patch
    out = [("enc.patch.w", (px, d)), ("enc.patch.b", (d,)), ("enc.pos", (cfg.n_visual, d))]
    for i in range(cfg.encoder_layers):
        out += _block_shapes(f"enc.{i}", d, h, cross=False)
    out += [("enc.lnf.g", (d,)), ("enc.lnf.b", (d,)),
            ("tok_emb", (cfg.vocab_size, d)), ("param_in.w", (P, d)), ("param_in.b", (d,)),
            ("pos_emb", (cfg.max_seq, d))]
    for i in range(cfg.n_layers):
        out += _block_shapes(f"dec.{i}", d, h, cross=True)
    out += [("lnf.g", (d,)), ("lnf.b", (d,)),
            ("head.w", (d, cfg.vocab_size)), ("head.b", (cfg.vocab_size,)),
            ("reg.w1", (d, d)), ("reg.b1", (d,)),
            ("reg.w2", (d, N_TYPES * P)), ("reg.b2", (N_TYPES * P,))]
    return out


def _is_norm_or_bias(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("b") or name.endswith(".g") or ".ln" in name


@dataclass
class Model:
    config: ModelConfig
    params: dict  # name -> Tensor, insertion order is the canonical order
    dtype: np.dtype = np.dtype(np.float32)

    @property
    def frozen(self) -> frozenset:
        return frozenset(n for n in self.params if is_frozen(n))

    @property
    def trainable(self) -> list[str]:
        return [n for n in self.params if not is_frozen(n)]

    @property
    def no_decay(self) -> frozenset:
        return frozenset(n for n in self.params if _is_norm_or_bias(n))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name].data

    def n_params(self, which: str = "all") -> int:
        names = {"all": list(self.params), "frozen": sorted(self.frozen),
                 "trainable": self.trainable}[which]
        return int(sum(self.params[n].size for n in names))

    def astype(self, dtype) -> "Model":
        dtype = np.dtype(dtype)
        params = {n: Tensor(t.data.astype(dtype), requires_grad=t.requires_grad, name=n)
                  for n, t in self.params.items()}
        return Model(self.config, params, dtype)


def build_model(cfg: ModelConfig, dtype=np.float32) -> Model:
    """Seeded N(0, 0.02) weights, unit norm gains, zero biases, zero regression output layers."""
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    dtype = np.dtype(dtype)
    params = {}
    for name, shape in param_names(cfg):
        if name in ZERO_INIT:
            data = np.zeros(shape)
        elif name.endswith(".g"):
            data = np.ones(shape)
        elif _is_norm_or_bias(name):
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=not is_frozen(name), name=name)
    return Model(cfg, params, dtype)


# ---------------------------------------------------------------- batching

def sequence_of(text_ids: Sequence[int], stream: TokenStream) -> tuple[np.ndarray, np.ndarray, int]:
    """(tokens, params, index of PAT_START) for one training sequence."""
    n = len(text_ids) + 1
    tokens = np.concatenate([np.asarray(text_ids, np.int64), [SEP], stream.tokens])
    params = np.concatenate([np.zeros((n, P)), stream.params])
    return tokens, params, n


@dataclass
class Batch:
    """Right-padded inputs and one-step-ahead targets for a set of sequences."""

    tokens: np.ndarray   # (B, T) model inputs
    params: np.ndarray   # (B, T, P)
    targets: np.ndarray  # (B, T) next token ids
    target_params: np.ndarray  # (B, T, P)
    ce_mask: np.ndarray  # (B, T) garment-segment target positions
    reg_mask: np.ndarray  # (B, T, P) live entries of parameter-carrying targets
    images: Optional[np.ndarray] = None  # (B, 64, 64) or None when enc is given
    enc: Optional[np.ndarray] = None     # (B, n_visual, d) cached encoder output

    @property
    def n_tokens(self) -> int:
        return int(self.ce_mask.sum())

    @property
    def n_reg(self) -> int:
        return int(self.reg_mask.sum())


def make_batch(seqs: Sequence[tuple[np.ndarray, np.ndarray, int]], images=None, enc=None) -> Batch:
    full = max(len(t) for t, _, _ in seqs)
    b = len(seqs)
    tok = np.full((b, full), PAD, dtype=np.int64)
    par = np.zeros((b, full, P))
    ce = np.zeros((b, full), dtype=bool)
    for i, (t, p, g) in enumerate(seqs):
        tok[i, :len(t)] = t
        par[i, :len(t)] = p
        ce[i, g:len(t)] = True  # target positions j >= g
    targets, tparams, cem = tok[:, 1:], par[:, 1:], ce[:, 1:]
    reg = arity_mask(targets) & cem[..., None]
    return Batch(tok[:, :-1], par[:, :-1], targets, np.where(reg, tparams, 0.0), cem, reg,
                 images=images, enc=enc)


# ---------------------------------------------------------------- forward

def _attend(model: Model, x: Tensor, prefix: str, kv: Optional[tuple] = None) -> Tensor:
    """Multi-head attention; causal self-attention unless ``kv`` (K, V heads) is given."""
    cfg = model.config
    p = model.params
    b, t, d = x.shape
    h = cfg.n_heads
    dh = d // h

    def heads(y, n):
        return ops.transpose(ops.reshape(y, (b, n, h, dh)), (0, 2, 1, 3))

    q = heads(ops.linear(x, p[prefix + ".wq"], p[prefix + ".bq"]), t)
    if kv is None:
        k = heads(ops.linear(x, p[prefix + ".wk"], p[prefix + ".bk"]), t)
        v = heads(ops.linear(x, p[prefix + ".wv"], p[prefix + ".bv"]), t)
    else:
        k, v = kv
    s = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    if kv is None:
        s = ops.causal_mask_fill(s)
    a = ops.matmul(ops.softmax(s), v)
    y = ops.reshape(ops.transpose(a, (0, 2, 1, 3)), (b, t, d))
    return ops.linear(y, p[prefix + ".wo"], p[prefix + ".bo"])


def _mlp(model: Model, x: Tensor, prefix: str) -> Tensor:
    p = model.params
    hdn = ops.gelu(ops.linear(x, p[prefix + ".w1"], p[prefix + ".b1"]))
    return ops.linear(hdn, p[prefix + ".w2"], p[prefix + ".b2"])


def _ln(model: Model, x: Tensor, prefix: str) -> Tensor:
    return ops.layernorm(x, model.params[prefix + ".g"], model.params[prefix + ".b"])


def _patches(model: Model, images: np.ndarray) -> np.ndarray:
    cfg = model.config
    imgs = np.asarray(images)
    if imgs.ndim == 2:
        imgs = imgs[None]
    if imgs.shape[1:] != (cfg.image_size, cfg.image_size):
        raise ShapeError(f"images must be {cfg.image_size}x{cfg.image_size}, got {imgs.shape[1:]}")
    x = imgs.astype(np.float64) / 127.5 - 1.0
    n, s = cfg.patch, cfg.image_size // cfg.patch
    x = x.reshape(len(imgs), s, n, s, n).transpose(0, 1, 3, 2, 4).reshape(len(imgs), s * s, n * n)
    return x.astype(model.dtype)


def encode_images(model: Model, images: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Frozen encoder output (B, n_visual, d) as a plain array (never taped)."""
    p = model.params
    out = []
    imgs = np.asarray(images)
    if imgs.ndim == 2:
        imgs = imgs[None]
    for lo in range(0, len(imgs), chunk):
        x = Tensor(_patches(model, imgs[lo:lo + chunk]))
        x = ops.add(ops.add(ops.matmul(x, p["enc.patch.w"]), p["enc.patch.b"]), p["enc.pos"])
        for i in range(model.config.encoder_layers):
            pre = f"enc.{i}"
            x = ops.add(x, _attend(model, _ln(model, x, pre + ".ln1"), pre + ".attn", kv=_self_kv(model, x, pre)))
            x = ops.add(x, _mlp(model, _ln(model, x, pre + ".ln2"), pre + ".mlp"))
        out.append(_ln(model, x, "enc.lnf").data)
    return np.concatenate(out)


def _self_kv(model: Model, x: Tensor, pre: str) -> tuple[Tensor, Tensor]:
    # bidirectional self-attention inside the encoder
    p = model.params
    b, t, d = x.shape
    h = model.config.n_heads
    y = _ln(model, x, pre + ".ln1")

    def heads(z):
        return ops.transpose(ops.reshape(z, (b, t, h, d // h)), (0, 2, 1, 3))

    return (heads(ops.linear(y, p[pre + ".attn.wk"], p[pre + ".attn.bk"])),
            heads(ops.linear(y, p[pre + ".attn.wv"], p[pre + ".attn.bv"])))


def cross_kv(model: Model, enc: np.ndarray, layer: int) -> tuple[np.ndarray, np.ndarray]:
    """Frozen cross-attention keys and values (B, H, n_visual, dh) for one layer."""
    p = model.params
    b, n, d = enc.shape
    h = model.config.n_heads
    pre = f"dec.{layer}.xattn"
    k = enc @ p[pre + ".wk"].data + p[pre + ".bk"].data
    v = enc @ p[pre + ".wv"].data + p[pre + ".bv"].data
    return (k.reshape(b, n, h, d // h).transpose(0, 2, 1, 3),
            v.reshape(b, n, h, d // h).transpose(0, 2, 1, 3))


def _check_inputs(model: Model, tokens: np.ndarray) -> None:
    cfg = model.config
    if tokens.shape[-1] > cfg.max_seq:
        raise LengthError(f"sequence length {tokens.shape[-1]} exceeds max_seq {cfg.max_seq}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size):
        raise VocabError(f"token ids must lie in [0, {cfg.vocab_size})")


def forward_batch(model: Model, tokens: np.ndarray, params: np.ndarray, enc: np.ndarray,
                  select: Optional[np.ndarray] = None) -> tuple[Tensor, Tensor]:
    """(logits (B, T, V), regression (B, T, P)) for padded inputs.

    ``select`` holds the next-token ids whose output group the regression
    head reports (the targets while training); by default the argmax of the
    logits, as in greedy decoding.
    """
    tokens = np.asarray(tokens)
    _check_inputs(model, tokens)
    p = model.params
    b, t = tokens.shape
    enc = np.asarray(enc, dtype=model.dtype)
    if enc.shape[0] != b:
        raise ShapeError(f"{enc.shape[0]} images for {b} sequences")
    x = ops.embedding_gather(p["tok_emb"], tokens)
    x = ops.add(x, ops.linear(Tensor(np.asarray(params, dtype=model.dtype)), p["param_in.w"], p["param_in.b"]))
    x = ops.add(x, ops.slice_(p["pos_emb"], slice(0, t)))
    for i in range(model.config.n_layers):
        pre = f"dec.{i}"
        x = ops.add(x, _attend(model, _ln(model, x, pre + ".ln1"), pre + ".attn"))
        k, v = cross_kv(model, enc, i)
        x = ops.add(x, _attend(model, _ln(model, x, pre + ".xattn.ln"), pre + ".xattn",
                               kv=(Tensor(k), Tensor(v))))
        x = ops.add(x, _mlp(model, _ln(model, x, pre + ".ln2"), pre + ".mlp"))
    # the token head reads the normalized stream; the regression head reads
    # the raw residual so that copied values are not rescaled by the norm
    logits = ops.linear(_ln(model, x, "lnf"), p["head.w"], p["head.b"])
    if select is None:
        select = logits.data.argmax(axis=-1)
    elif np.shape(select) != (b, t):
        raise ShapeError(f"select shape {np.shape(select)} vs tokens {(b, t)}")
    groups = ops.linear(ops.gelu(ops.linear(x, p["reg.w1"], p["reg.b1"])), p["reg.w2"], p["reg.b2"])
    picked = ops.mul(groups, Tensor(type_mask(select, model.dtype)))
    reg = ops.matmul(picked, Tensor(_GROUP_SUM.astype(model.dtype)))
    return logits, reg


def forward(model: Model, image: np.ndarray, text_tokens: Sequence[int], stream: TokenStream
            ) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample forward over text, SEP and the garment stream.

    Output at position i predicts the token and parameters at i + 1.
    """
    tokens, params, _ = sequence_of(text_tokens, stream)
    logits, reg = forward_batch(model, tokens[None], params[None], encode_images(model, image))
    return logits.data[0], reg.data[0]


def loss(logits: Tensor, reg: Tensor, batch: Batch, lambda_reg: float = 1.0,
         ce_norm: Optional[float] = None, reg_norm: Optional[float] = None
         ) -> tuple[Tensor, Tensor, Tensor]:
    """(total, ce, reg) with total = ce + lambda_reg * reg.

    The optional normalizers replace the per-batch counts so that micro
    batches can share the denominators of their effective batch.
    """
    if logits.shape[:2] != batch.targets.shape or reg.shape != batch.target_params.shape:
        raise ShapeError(f"outputs {logits.shape}/{reg.shape} vs targets {batch.targets.shape}")
    ce = ops.cross_entropy(logits, batch.targets, batch.ce_mask, ce_norm)
    rg = ops.mse_masked(reg, batch.target_params, batch.reg_mask, reg_norm)
    return ops.add(ce, ops.scale(rg, lambda_reg)), ce, rg
