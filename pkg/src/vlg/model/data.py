"""Turning dataset rows into model sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datagen.dataset import Dataset, ManifestRow
from ..datagen.prompts import PromptRecord, word_ids
from ..errors import DataError, LengthError, PatternError
from ..pattern import SewingPattern
from ..tokenizer import TokenStream, encode
from .network import sequence_of

__all__ = ["SplitData", "load_split"]


@dataclass
class SplitData:
    rows: list[ManifestRow]
    patterns: list[SewingPattern]
    prompts: list[PromptRecord]
    texts: list[list[int]]
    streams: list[TokenStream]
    images: np.ndarray  # (N, 64, 64) uint8

    def __len__(self) -> int:
        return len(self.rows)

    def seqs(self, idx) -> list:
        return [sequence_of(self.texts[i], self.streams[i]) for i in idx]


def load_split(ds: Dataset, split: str, max_seq: int | None = None) -> SplitData:
    rows = ds.split(split)
    patterns, prompts, texts, streams, images = [], [], [], [], []
    for r in rows:
        try:
            p = ds.pattern(r)
        except PatternError as exc:
            raise DataError(f"{r.id}: {exc}") from exc
        pr = ds.prompt(r)
        try:
            ids = word_ids(r.prompt)
        except KeyError as exc:
            raise DataError(f"{r.id}: word {exc} outside the prompt vocabulary") from None
        s = encode(p)
        if max_seq is not None and len(ids) + 1 + len(s) > max_seq:
            raise LengthError(f"{r.id}: sequence of {len(ids) + 1 + len(s)} exceeds max_seq {max_seq}")
        patterns.append(p)
        prompts.append(pr)
        texts.append(ids)
        streams.append(s)
        images.append(ds.image(r))
    imgs = np.stack(images) if images else np.zeros((0, 64, 64), np.uint8)
    return SplitData(rows, patterns, prompts, texts, streams, imgs)
