"""Model and training configuration, plus the learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..datagen.prompts import VOCAB
from ..errors import ConfigError, RangeError
from ..tokenizer import N_SPECIAL, P

__all__ = ["ModelConfig", "TrainConfig", "lr_at", "desk_warmup", "REFERENCE_PEAK_LR",
           "REFERENCE_WARMUP", "config_from_dict"]

REFERENCE_PEAK_LR = 6e-5
REFERENCE_WARMUP = 1000
_DESK_LIMIT = 20_000


def _coerce(cls, values: dict):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for k, v in values.items():
        if k not in known:
            raise ConfigError(f"unknown {cls.__name__} key {k!r}")
        typ = str(known[k].type)
        try:
            if typ == "int":
                kwargs[k] = int(v)
            elif typ == "float":
                kwargs[k] = float(v)
            else:
                kwargs[k] = v
        except ValueError:
            raise ConfigError(f"{k}: cannot parse {v!r} as {typ}") from None
    return cls(**kwargs)


def config_from_dict(cls, values: dict):
    return _coerce(cls, values)


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    vocab_size: int = N_SPECIAL + len(VOCAB)
    max_seq: int = 256
    param_arity: int = P
    patch: int = 8
    image_size: int = 64
    encoder_layers: int = 2
    mlp_ratio: int = 4
    lambda_reg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model <= 0 or self.n_heads <= 0 or self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} must be a positive multiple of n_heads {self.n_heads}")
        if self.n_layers < 1 or self.encoder_layers < 0:
            raise ConfigError("need n_layers >= 1 and encoder_layers >= 0")
        if self.image_size % self.patch:
            raise ConfigError("image_size must be a multiple of patch")
        if self.vocab_size < N_SPECIAL:
            raise ConfigError(f"vocab_size must cover the {N_SPECIAL} garment/control tokens")
        if self.param_arity != P:
            raise ConfigError(f"param_arity is fixed at {P}")
        if self.max_seq < 2:
            raise ConfigError("max_seq must be >= 2")

    @property
    def n_visual(self) -> int:
        return (self.image_size // self.patch) ** 2

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        return _coerce(cls, values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    micro_batch: int = 6
    accum_steps: int = 5
    workers: int = 1
    peak_lr: float = REFERENCE_PEAK_LR
    warmup_steps: int = REFERENCE_WARMUP
    lambda_reg: float = 1.0
    clip: float = 1.0
    weight_decay: float = 0.01
    seed: int = 0
    checkpoint_every: int = 0  # optimizer steps; 0 saves only the final state
    val_subsample: int = 100
    val_batch: int = 50
    ema_decay: float = 0.0  # 0 disables weight averaging

    def __post_init__(self):
        for name in ("epochs", "micro_batch", "accum_steps", "workers", "val_batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.peak_lr < 0 or self.clip <= 0 or self.warmup_steps < 0:
            raise ConfigError("need peak_lr >= 0, clip > 0, warmup_steps >= 0")
        if not 0 <= self.ema_decay < 1:
            raise ConfigError("ema_decay must lie in [0, 1)")

    @property
    def effective_batch(self) -> int:
        return self.micro_batch * self.accum_steps * self.workers

    def total_steps(self, n_train: int) -> int:
        per_epoch = -(-n_train // self.effective_batch)
        return per_epoch * self.epochs

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        return _coerce(cls, values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def desk_warmup(total_steps: int, warmup: int = REFERENCE_WARMUP) -> int:
    """Warmup actually used: 5% of the run when it is short, else ``warmup``."""
    if total_steps < _DESK_LIMIT:
        return min(max(1, int(round(0.05 * total_steps))), total_steps - 1)
    return warmup


def lr_at(step: int, total_steps: int, peak: float = REFERENCE_PEAK_LR,
          warmup: int = REFERENCE_WARMUP) -> float:
    """Linear warmup from 0 to ``peak`` then linear decay to 0 at ``total_steps``."""
    if not 0 <= warmup < total_steps:
        raise RangeError(f"need 0 <= warmup ({warmup}) < total_steps ({total_steps})")
    if not 0 <= step <= total_steps:
        raise RangeError(f"step {step} outside [0, {total_steps}]")
    if step <= warmup:
        return peak * step / warmup if warmup else peak
    return peak * (total_steps - step) / (total_steps - warmup)
