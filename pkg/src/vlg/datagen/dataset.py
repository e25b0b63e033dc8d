"""Dataset manifests: train / val / five test-axis splits on disk.

Layout of an output directory::

    dataset.cfg          canonical echo of the build config
    manifest.csv         id,split,family,tier,axis,seed,pattern_path,image_path,prompt
    prompts.txt          id<TAB>tier<TAB>constraints<TAB>text, one per line
    vocab.txt            closed prompt vocabulary, one word per line
    patterns/<id>.garment.json
    images/<id>.pgm

Seeds: row ``k`` of split code ``s`` uses
``SeedSequence(master_seed, spawn_key=(s, k, stream))`` with stream 0 for the
garment, 1 for the prompt and 2 for the render perturbation. Garments are
shared across variants; variants only change training prompts and renders.
The four image axes perturb the same test garments; the language axis uses
them in triples (one garment per vague/medium/precise prompt).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from ..errors import ConfigError, DataError, OutOfCanvasWarning
from ..pattern import parse_pattern, serialize_pattern, SewingPattern
from .garments import FAMILIES, RNG_NAME, ParamRecord, make_rng, sample_garment
from .prompts import (TIERS, VOCAB, PromptRecord, format_constraints, gen_prompt,
                      parse_constraints)
from .render import DEFAULT_SPEC, RenderSpec, perturb_spec, read_pgm, render, write_pgm

__all__ = ["VARIANTS", "TEST_AXES", "DatasetConfig", "ManifestRow", "Dataset", "build_dataset",
           "read_kv", "write_kv", "derive_seed", "MANIFEST_HEADER"]

VARIANTS = ("base", "+prompts", "+textures")
IMAGE_AXES = ("visual", "position", "scale", "appearance")
TEST_AXES = IMAGE_AXES + ("language",)
MANIFEST_HEADER = ["id", "split", "family", "tier", "axis", "seed", "pattern_path",
                   "image_path", "prompt"]

_CODES = {"train": 0, "val": 1, "test": 2, "visual": 3, "position": 4, "scale": 5,
          "appearance": 6, "language": 7}


def derive_seed(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def read_kv(path: str | Path) -> dict[str, str]:
    """Parse a ``key=value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_kv(path: str | Path, values: dict) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in values.items()), encoding="utf-8")


@dataclass(frozen=True)
class DatasetConfig:
    """Dataset build settings (config file keys are the field names)."""

    train: int = 2000
    val: int = 500
    test_per_axis: int = 200
    seed: int = 0
    variant: str = "base"
    families: tuple[str, ...] = FAMILIES
    axis_magnitude: float = 1.0
    texture_fraction: float = 0.5

    def __post_init__(self):
        for name in ("train", "val", "test_per_axis"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad or not self.families:
            raise ConfigError(f"unknown families {bad}")
        if not 0 < self.axis_magnitude <= 1:
            raise ConfigError("axis_magnitude must lie in (0, 1]")
        if not 0 <= self.texture_fraction <= 1:
            raise ConfigError("texture_fraction must lie in [0, 1]")

    @classmethod
    def from_dict(cls, values: dict) -> "DatasetConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for k, v in values.items():
            if k not in known:
                raise ConfigError(f"unknown dataset key {k!r}")
            if k == "families":
                kwargs[k] = tuple(x.strip() for x in str(v).split(",") if x.strip())
            elif k == "variant":
                kwargs[k] = str(v)
            elif k in ("axis_magnitude", "texture_fraction"):
                kwargs[k] = float(v)
            else:
                try:
                    kwargs[k] = int(v)
                except ValueError:
                    raise ConfigError(f"{k} must be an integer, got {v!r}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "DatasetConfig":
        return cls.from_dict(read_kv(path))

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["families"] = ",".join(self.families)
        return d


@dataclass
class ManifestRow:
    id: str
    split: str
    family: str
    tier: str
    axis: str
    seed: int
    pattern_path: str
    image_path: str
    prompt: str

    @property
    def test_axis(self) -> Optional[str]:
        return self.split.split(":", 1)[1] if self.split.startswith("test-axis:") else None


@dataclass
class _Sample:
    row: ManifestRow
    pattern: SewingPattern
    image: np.ndarray
    prompt: PromptRecord


def _garment(cfg: DatasetConfig, code: int, k: int) -> tuple[SewingPattern, ParamRecord]:
    seed = derive_seed(cfg.seed, code, k, 0)
    rng = make_rng(seed)
    family = cfg.families[int(rng.integers(len(cfg.families)))]
    return sample_garment(family, rng, seed)


def _texture_spec(rng: np.random.Generator) -> RenderSpec:
    # training textures stay milder than the appearance test axis
    fill = ("stripes6", "dots4")[int(rng.integers(2))]
    return replace(DEFAULT_SPEC, fill=fill, fill_contrast=float(rng.uniform(0.2, 0.6)),
                   noise_seed=int(rng.integers(0, 2**63)))


def _samples(cfg: DatasetConfig) -> Iterator[_Sample]:
    def make(rid, split, axis, pattern, params, prompt, spec):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutOfCanvasWarning)
            image = render(params, spec)
        row = ManifestRow(rid, split, params.family, prompt.tier, axis, params.seed,
                          f"patterns/{rid}.garment.json", f"images/{rid}.pgm", prompt.text)
        return _Sample(row, pattern, image, prompt)

    for k in range(cfg.train):
        pattern, params = _garment(cfg, _CODES["train"], k)
        prng = make_rng(derive_seed(cfg.seed, _CODES["train"], k, 1))
        tier = "precise" if cfg.variant == "base" else TIERS[int(prng.integers(3))]
        prompt = gen_prompt(params, tier, prng, seed=params.seed)
        spec, axis = DEFAULT_SPEC, "none"
        if cfg.variant == "+textures":
            trng = make_rng(derive_seed(cfg.seed, _CODES["train"], k, 2))
            if trng.random() < cfg.texture_fraction:
                spec, axis = _texture_spec(trng), "appearance"
        yield make(f"train-{k:05d}", "train", axis, pattern, params, prompt, spec)

    for k in range(cfg.val):
        pattern, params = _garment(cfg, _CODES["val"], k)
        prng = make_rng(derive_seed(cfg.seed, _CODES["val"], k, 1))
        prompt = gen_prompt(params, "precise", prng, seed=params.seed)
        yield make(f"val-{k:05d}", "val", "in-distribution", pattern, params, prompt, DEFAULT_SPEC)

    garments = [_garment(cfg, _CODES["test"], k) for k in range(cfg.test_per_axis)]
    for axis in IMAGE_AXES:
        for k, (pattern, params) in enumerate(garments):
            prng = make_rng(derive_seed(cfg.seed, _CODES["test"], k, 1))
            prompt = gen_prompt(params, "precise", prng, seed=params.seed)
            srng = make_rng(derive_seed(cfg.seed, _CODES[axis], k, 2))
            spec = perturb_spec(axis, cfg.axis_magnitude, srng)
            yield make(f"{axis}-{k:05d}", f"test-axis:{axis}", axis, pattern, params, prompt, spec)
    for k in range(cfg.test_per_axis):
        pattern, params = garments[k // len(TIERS)]
        prng = make_rng(derive_seed(cfg.seed, _CODES["language"], k, 1))
        prompt = gen_prompt(params, TIERS[k % len(TIERS)], prng, heldout=True, seed=params.seed)
        yield make(f"language-{k:05d}", "test-axis:language", "language", pattern, params,
                   prompt, DEFAULT_SPEC)


def build_dataset(cfg: DatasetConfig, out: str | Path) -> Path:
    """Write every artifact of ``cfg`` under ``out``; returns the manifest path."""
    out = Path(out)
    try:
        (out / "patterns").mkdir(parents=True, exist_ok=True)
        (out / "images").mkdir(parents=True, exist_ok=True)
        rows, prompt_lines = [], []
        for s in _samples(cfg):
            (out / s.row.pattern_path).write_bytes(serialize_pattern(s.pattern))
            write_pgm(out / s.row.image_path, s.image)
            prompt_lines.append(
                f"{s.row.id}\t{s.prompt.tier}\t{format_constraints(s.prompt.constraints)}\t{s.prompt.text}\n")
            rows.append(s.row)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in rows:
            writer.writerow([getattr(r, h) for h in MANIFEST_HEADER])
        manifest = out / "manifest.csv"
        manifest.write_text(buf.getvalue(), encoding="utf-8")
        (out / "prompts.txt").write_text("".join(prompt_lines), encoding="utf-8")
        (out / "vocab.txt").write_text("".join(w + "\n" for w in VOCAB), encoding="utf-8")
        write_kv(out / "dataset.cfg", {**cfg.to_dict(), "rng": RNG_NAME})
    except OSError as exc:
        raise DataError(f"writing dataset to {out}: {exc}") from exc
    return manifest


class Dataset:
    """Read-only view of a built dataset directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        path = self.root / "manifest.csv"
        try:
            with path.open(encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != MANIFEST_HEADER:
                    raise DataError(f"{path}: unexpected header {reader.fieldnames}")
                self.rows = [ManifestRow(**{**r, "seed": int(r["seed"])}) for r in reader]
            self._prompts = {}
            for line in (self.root / "prompts.txt").read_text(encoding="utf-8").splitlines():
                rid, tier, cons, text = line.split("\t")
                self._prompts[rid] = (tier, cons, text)
        except OSError as exc:
            raise DataError(f"reading dataset {self.root}: {exc}") from exc
        self._by_id = {r.id: r for r in self.rows}

    @cached_property
    def config(self) -> DatasetConfig:
        values = read_kv(self.root / "dataset.cfg")
        values.pop("rng", None)
        return DatasetConfig.from_dict(values)

    def split(self, name: str) -> list[ManifestRow]:
        return [r for r in self.rows if r.split == name]

    def splits(self) -> list[str]:
        return list(dict.fromkeys(r.split for r in self.rows))

    def pattern(self, row: ManifestRow) -> SewingPattern:
        try:
            return parse_pattern((self.root / row.pattern_path).read_bytes())
        except OSError as exc:
            raise DataError(str(exc)) from exc

    def image(self, row: ManifestRow) -> np.ndarray:
        return read_pgm(self.root / row.image_path)

    def prompt(self, row: ManifestRow) -> PromptRecord:
        tier, cons, text = self._prompts[row.id]
        return PromptRecord(tier, parse_constraints(cons), text, row.seed)

    def manifest_bytes(self) -> bytes:
        return (self.root / "manifest.csv").read_bytes()
