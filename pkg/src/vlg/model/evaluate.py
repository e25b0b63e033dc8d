"""Greedy prediction and per-row scoring shared by training and the bench."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import DecodeError, EmptyConstraintWarning, EmptyPatternWarning
from ..metrics import garment_accuracy, text_alignment, vertex_l2
from ..pattern import SewingPattern
from ..tokenizer import TokenStream, decode
from .data import SplitData
from .generate import DEFAULT_MAX_LEN, generate_batch
from .network import Model, encode_images

__all__ = ["RowScore", "score_prediction", "predict_streams", "evaluate_rows", "summarize",
           "EMPTY"]

EMPTY = SewingPattern((), ())


@dataclass(frozen=True)
class RowScore:
    id: str
    garment_acc: float
    vertex_l2_cm: float
    text_alignment: float
    failed: bool
    error: str = ""


def score_prediction(rid: str, stream: Optional[TokenStream], truth: SewingPattern,
                     prompt_constraints: dict) -> RowScore:
    """Decode ``stream`` and score it; structured decode errors count as failures."""
    pred, err = None, ""
    if stream is not None:
        try:
            pred = decode(stream)
        except DecodeError as exc:
            err = type(exc).__name__
    else:
        err = "NoPrediction"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyConstraintWarning)
        warnings.simplefilter("ignore", EmptyPatternWarning)
        if pred is None:
            return RowScore(rid, 0.0, vertex_l2(EMPTY, truth), 0.0, True, err)
        return RowScore(rid, float(garment_accuracy(pred, truth)), vertex_l2(pred, truth),
                        text_alignment(pred, prompt_constraints), False)


def predict_streams(model: Model, data: SplitData, idx: Sequence[int], batch: int = 50,
                    max_len: int = DEFAULT_MAX_LEN, enc: Optional[np.ndarray] = None
                    ) -> list[TokenStream]:
    out = []
    idx = list(idx)
    for lo in range(0, len(idx), batch):
        part = idx[lo:lo + batch]
        e = enc[part] if enc is not None else encode_images(model, data.images[part])
        out += generate_batch(model, e, [data.texts[i] for i in part], max_len)
    return out


def evaluate_rows(model: Optional[Model], data: SplitData, idx: Optional[Sequence[int]] = None,
                  batch: int = 50, oracle: bool = False, enc: Optional[np.ndarray] = None
                  ) -> list[RowScore]:
    """Score rows ``idx`` of ``data``; ``oracle`` scores the encoded targets instead."""
    idx = list(range(len(data))) if idx is None else list(idx)
    if oracle:
        streams = [data.streams[i] for i in idx]
    else:
        streams = predict_streams(model, data, idx, batch, enc=enc)
    return [score_prediction(data.rows[i].id, s, data.patterns[i], data.prompts[i].constraints)
            for i, s in zip(idx, streams)]


def summarize(scores: Sequence[RowScore]) -> dict:
    n = len(scores)
    if n == 0:
        return {"n": 0, "garment_acc": float("nan"), "vertex_l2_cm": float("nan"),
                "text_alignment": float("nan"), "failure_rate": float("nan")}
    return {
        "n": n,
        "garment_acc": float(np.mean([s.garment_acc for s in scores])),
        "vertex_l2_cm": float(np.mean([s.vertex_l2_cm for s in scores])),
        "text_alignment": float(np.mean([s.text_alignment for s in scores])),
        "failure_rate": float(np.mean([s.failed for s in scores])),
    }
