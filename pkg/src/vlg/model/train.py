"""Training loop: gradient accumulation, clipping, AdamW, per-epoch validation.

Averaging order: the samples of one optimizer step are split into
``workers * accum_steps`` micro batches processed in index order. Every
micro batch divides its summed losses by the token (and live-parameter)
counts of the whole effective batch, and the gradients are summed in that
order, so the result equals one pass over the full effective batch up to
float rounding.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..autodiff.optim import AdamWState, adamw_step, clip_grad_norm
from ..autodiff.tensor import Tape
from ..datagen.dataset import Dataset
from ..errors import CheckpointError, NonFiniteError
from .checkpoint import frozen_checksum, save_checkpoint
from .config import TrainConfig, desk_warmup, lr_at
from .data import SplitData, load_split
from .evaluate import evaluate_rows, summarize
from .network import Model, encode_images, forward_batch, loss, make_batch

__all__ = ["TrainResult", "train", "validation_losses", "LOG_HEADER"]

log = logging.getLogger(__name__)

LOG_HEADER = ["step", "lr", "ce", "reg", "val_loss", "val_acc", "val_vl2"]


@dataclass
class TrainResult:
    model: Model
    state: AdamWState
    steps: int
    warmup: int
    log_rows: list = field(default_factory=list)
    epochs: list = field(default_factory=list)  # dicts: epoch, step, val_ce, val_reg, val_loss, val_acc, val_vl2
    frozen_before: str = ""
    frozen_after: str = ""
    checkpoint: Optional[Path] = None
    final_loss: float = float("nan")

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for r in self.log_rows:
            w.writerow([_cell(r.get(k)) for k in LOG_HEADER])
        return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def validation_losses(model: Model, data: SplitData, enc: np.ndarray, lambda_reg: float,
                      batch: int = 50) -> tuple[float, float]:
    """Token-weighted validation (ce, reg) over every row of ``data``."""
    ce_sum = reg_sum = 0.0
    n_tok = n_reg = 0
    for lo in range(0, len(data), batch):
        idx = list(range(lo, min(lo + batch, len(data))))
        b = make_batch(data.seqs(idx), enc=enc[idx])
        logits, reg = forward_batch(model, b.tokens, b.params, b.enc, b.targets)
        _, ce, rg = loss(logits, reg, b, lambda_reg)
        ce_sum += ce.item() * max(b.n_tokens, 1)
        reg_sum += rg.item() * max(b.n_reg, 1)
        n_tok += b.n_tokens
        n_reg += b.n_reg
    return ce_sum / max(n_tok, 1), reg_sum / max(n_reg, 1)


def train(model: Model, dataset: Dataset | None, tc: TrainConfig, out: str | Path | None = None,
          data: Optional[tuple[SplitData, SplitData]] = None,
          progress: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Train ``model`` in place on the dataset's train split.

    With ``tc.ema_decay`` set, validation and the returned weights use the
    exponential moving average of the trainable parameters.

    ``data`` may supply pre-loaded (train, val) splits. When ``out`` is
    given, the final checkpoint, ``train_log.csv`` and ``epochs.csv`` are
    written there.
    """
    if data is None:
        data = (load_split(dataset, "train", model.config.max_seq),
                load_split(dataset, "val", model.config.max_seq))
    tr, va = data
    n = len(tr)
    if n == 0:
        raise ValueError("empty training split")
    total = tc.total_steps(n)
    warmup = desk_warmup(total, tc.warmup_steps)
    enc_tr = encode_images(model, tr.images)
    enc_va = encode_images(model, va.images) if len(va) else None
    val_idx = list(range(min(tc.val_subsample, len(va))))
    state = AdamWState(weight_decay=tc.weight_decay, no_decay=model.no_decay)
    trainable = model.trainable
    frozen0 = frozen_checksum(model)
    rng = np.random.Generator(np.random.Philox(tc.seed))
    res = TrainResult(model, state, total, warmup, frozen_before=frozen0)
    eff = tc.effective_batch
    chunks = tc.workers * tc.accum_steps
    ema = {k: model.params[k].data.copy() for k in trainable} if tc.ema_decay else None
    step = 0
    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, eff):
            step += 1
            sel = order[lo:lo + eff]
            parts = [p for p in np.array_split(sel, chunks) if len(p)]
            batches = [make_batch(tr.seqs(p), enc=enc_tr[p]) for p in parts]
            n_tok = sum(b.n_tokens for b in batches)
            n_reg = sum(b.n_reg for b in batches)
            for name in trainable:
                model.params[name].zero_grad()
            ce_tot = reg_tot = 0.0
            for b in batches:
                with Tape() as tape:
                    logits, reg = forward_batch(model, b.tokens, b.params, b.enc, b.targets)
                    total_l, ce, rg = loss(logits, reg, b, tc.lambda_reg, max(n_tok, 1), max(n_reg, 1))
                if not math.isfinite(total_l.item()):
                    raise NonFiniteError(f"non-finite loss at step {step}", step)
                tape.backward(total_l)
                ce_tot += ce.item()
                reg_tot += rg.item()
            grads = {name: model.params[name].grad for name in trainable}
            norm = clip_grad_norm(grads, tc.clip)
            if not math.isfinite(norm):
                raise NonFiniteError(f"non-finite gradient norm at step {step}", step)
            lr = lr_at(step, total, tc.peak_lr, warmup)
            adamw_step(model.params, grads, state, lr)
            if ema is not None:
                d = np.float32(tc.ema_decay)
                for k, v in ema.items():
                    v *= d
                    v += (1 - d) * model.params[k].data
            res.final_loss = ce_tot + tc.lambda_reg * reg_tot
            res.log_rows.append({"step": step, "lr": lr, "ce": ce_tot, "reg": reg_tot})
            if out is not None and tc.checkpoint_every and step % tc.checkpoint_every == 0:
                _check_frozen(model, frozen0, step)
                save_checkpoint(model, state, Path(out) / f"step-{step:06d}", tc, step,
                                extra={"warmup_used": warmup, "total_steps": total})
        if enc_va is not None:
            raw = _swap(model, ema)
            vce, vreg = validation_losses(model, va, enc_va, tc.lambda_reg, tc.val_batch)
            summ = summarize(evaluate_rows(model, va, val_idx, tc.val_batch, enc=enc_va[val_idx]))
            ep = {"epoch": epoch, "step": step, "val_ce": vce, "val_reg": vreg,
                  "val_loss": vce + tc.lambda_reg * vreg, "val_acc": summ["garment_acc"],
                  "val_vl2": summ["vertex_l2_cm"]}
            res.epochs.append(ep)
            res.log_rows[-1].update(val_loss=ep["val_loss"], val_acc=ep["val_acc"], val_vl2=ep["val_vl2"])
            log.info("epoch %d step %d val_ce %.4f val_reg %.5f acc %.3f vl2 %.2f", epoch, step,
                     vce, vreg, ep["val_acc"], ep["val_vl2"])
            _swap(model, raw)
            if progress is not None:
                progress(ep)
    _swap(model, ema)
    res.frozen_after = _check_frozen(model, frozen0, step)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        metrics = {k: v for k, v in (res.epochs[-1].items() if res.epochs else [])
                   if k not in ("epoch", "step")}
        res.checkpoint = save_checkpoint(model, state, out / "checkpoint", tc, step, metrics,
                                         extra={"warmup_used": warmup, "total_steps": total})
        (out / "train_log.csv").write_text(res.log_csv(), encoding="utf-8")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = ["epoch", "step", "val_ce", "val_reg", "val_loss", "val_acc", "val_vl2"]
        w.writerow(keys)
        for e in res.epochs:
            w.writerow([_cell(e[k]) for k in keys])
        (out / "epochs.csv").write_text(buf.getvalue(), encoding="utf-8")
    return res


def _swap(model: Model, values: Optional[dict]) -> Optional[dict]:
    """Install ``values`` as parameter data; returns the arrays it replaced."""
    if values is None:
        return None
    old = {k: model.params[k].data for k in values}
    for k, v in values.items():
        model.params[k].data = v.copy()
    return old


def _check_frozen(model: Model, expected: str, step: int) -> str:
    now = frozen_checksum(model)
    if now != expected:
        raise CheckpointError(f"frozen parameters changed by step {step}")
    return now
