"""Checkpoint directories: ``manifest.txt`` plus one little-endian f32 blob per array.

Manifest lines are ``key=value``. Parameters are listed as
``param.<name>=<d0>x<d1>... <frozen|trainable> <sha256 prefix>`` and the
optimizer moments as ``opt.m.<name>`` / ``opt.v.<name>`` with the same
layout; blobs live next to the manifest as ``<key>.f32``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..autodiff.optim import AdamWState
from ..autodiff.tensor import Tensor
from ..errors import CheckpointError, CorruptionError, VersionError
from .config import ModelConfig, TrainConfig
from .network import Model, is_frozen

__all__ = ["FORMAT_VERSION", "Checkpoint", "save_checkpoint", "load_checkpoint",
           "read_checkpoint", "frozen_checksum", "read_manifest"]

FORMAT_VERSION = 1
_DIGEST = 16


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, "<f4").tobytes()).hexdigest()[:_DIGEST]


def frozen_checksum(model: Model) -> str:
    h = hashlib.sha256()
    for name in sorted(model.frozen):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.params[name].data).tobytes())
    return h.hexdigest()


@dataclass
class Checkpoint:
    model: Model
    state: Optional[AdamWState]
    manifest: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return int(self.manifest.get("step", 0))


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def save_checkpoint(model: Model, state: Optional[AdamWState], path: str | Path,
                    train_config: Optional[TrainConfig] = None, step: int = 0,
                    metrics: Optional[dict] = None, extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [f"format_version={FORMAT_VERSION}", f"step={step}", f"seed={model.config.seed}"]
    lines += [f"model.{k}={_fmt(v)}" for k, v in model.config.to_dict().items()]
    if train_config is not None:
        lines += [f"train.{k}={_fmt(v)}" for k, v in train_config.to_dict().items()]
        lines.append(f"effective_batch={train_config.micro_batch}x{train_config.accum_steps}"
                     f"x{train_config.workers}={train_config.effective_batch}")
    if state is not None:
        lines += [f"optimizer=adamw", f"optimizer.beta1={state.beta1!r}",
                  f"optimizer.beta2={state.beta2!r}", f"optimizer.eps={state.eps!r}",
                  f"optimizer.weight_decay={state.weight_decay!r}", f"optimizer.t={state.t}"]
    lines.append(f"frozen.count={len(model.frozen)}")
    lines.append(f"frozen.params={model.n_params('frozen')}")
    lines.append(f"frozen.checksum={frozen_checksum(model)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k}={_fmt(v)}")
    for k, v in (metrics or {}).items():
        lines.append(f"metric.{k}={_fmt(v)}")

    def put(key: str, arr: np.ndarray, tag: str) -> None:
        data = np.ascontiguousarray(arr, dtype="<f4")
        (path / f"{key}.f32").write_bytes(data.tobytes())
        shape = "x".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"{key}={shape} {tag} {_digest(data)}")

    for name, t in model.params.items():
        put(f"param.{name}", t.data, "frozen" if is_frozen(name) else "trainable")
    if state is not None:
        for name in model.params:
            if name in state.m:
                put(f"opt.m.{name}", state.m[name], "moment")
                put(f"opt.v.{name}", state.v[name], "moment")
    (path / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = (path / "manifest.txt").read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read {path / 'manifest.txt'}: {exc}") from exc
    out = {}
    for line in text.splitlines():
        if line.strip():
            if "=" not in line:
                raise CorruptionError(f"malformed manifest line {line!r}")
            k, v = line.split("=", 1)
            out[k] = v
    return out


def _blob(path: Path, key: str, spec: str) -> np.ndarray:
    shape_s, _, digest = spec.split(" ")
    shape = () if shape_s == "scalar" else tuple(int(s) for s in shape_s.split("x"))
    try:
        raw = (path / f"{key}.f32").read_bytes()
    except OSError as exc:
        raise CorruptionError(f"missing blob {key}.f32") from exc
    n = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * n:
        raise CorruptionError(f"{key}.f32 has {len(raw)} bytes, manifest shape {shape} needs {4 * n}")
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    if _digest(arr) != digest:
        raise CorruptionError(f"{key}.f32 checksum mismatch")
    return arr


def read_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    man = read_manifest(path)
    version = man.get("format_version")
    if version != str(FORMAT_VERSION):
        raise VersionError(f"checkpoint format {version!r}, expected {FORMAT_VERSION}")
    cfg = ModelConfig.from_dict({k[6:]: v for k, v in man.items() if k.startswith("model.")})
    params = {}
    for key, spec in man.items():
        if key.startswith("param."):
            name = key[6:]
            params[name] = Tensor(_blob(path, key, spec), requires_grad=not is_frozen(name), name=name)
    model = Model(cfg, params)
    state = None
    if man.get("optimizer") == "adamw":
        state = AdamWState(float(man["optimizer.beta1"]), float(man["optimizer.beta2"]),
                           float(man["optimizer.eps"]), float(man["optimizer.weight_decay"]),
                           model.no_decay, int(man["optimizer.t"]))
        for key, spec in man.items():
            if key.startswith("opt.m."):
                state.m[key[6:]] = _blob(path, key, spec)
            elif key.startswith("opt.v."):
                state.v[key[6:]] = _blob(path, key, spec)
    if man.get("frozen.checksum") and man["frozen.checksum"] != frozen_checksum(model):
        raise CorruptionError("frozen parameter checksum mismatch")
    return Checkpoint(model, state, man)


def load_checkpoint(path: str | Path) -> Model:
    return read_checkpoint(path).model
