"""Experiment protocol: axis evaluation, dataset ablation, data scaling, prompt tiers.

Every function here works on loaded objects; the CLI wraps them with paths.
CSV floats are written with six decimals so reruns compare byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..datagen.dataset import TEST_AXES, VARIANTS, Dataset, DatasetConfig, build_dataset, read_kv
from ..datagen.prompts import TIERS
from ..errors import (BudgetMismatchError, ConfigError, MissingSplitError, MissingTierError)
from ..model.config import ModelConfig, TrainConfig
from ..model.data import SplitData, load_split
from ..model.evaluate import RowScore, evaluate_rows, summarize
from ..model.network import Model, build_model
from ..model.train import TrainResult, train
from . import svg

__all__ = ["AXES", "ExperimentConfig", "AxisReport", "axis_splits", "run_axis_eval",
           "run_ablation", "run_data_scaling", "run_text_tiers", "write_csv", "rows_csv",
           "PUBLISHED_TABLE", "split_hash", "load_axis_data"]

log = logging.getLogger(__name__)

AXES = ("in-distribution",) + TEST_AXES
ROW_HEADER = ["sample_id", "garment_acc", "vertex_l2_cm", "text_alignment", "axis", "magnitude"]
# full-scale reference values (garment acc, vertex L2 cm, text alignment)
PUBLISHED_TABLE = {"base": (0.755, 4.896, 0.388), "+prompts": (0.727, 5.483, 0.682),
                   "+textures": (0.772, 5.047, 0.666)}


def _f(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence], comments: Sequence[str] = ()) -> Path:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_f(v) for v in r])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by the bench commands.

    A config file holds ``key=value`` lines. ``dataset_config``,
    ``model_config`` and ``train_config`` name other key=value files
    (relative to this one); ``data.<k>``, ``model.<k>`` and ``train.<k>``
    override single keys; bare dataset keys are accepted for convenience.
    """

    data: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    variant: str = "base"
    sizes: tuple[int, ...] = (250, 500, 1000, 2000)
    seed: int = 0

    @classmethod
    def load(cls, path: str | Path | None) -> "ExperimentConfig":
        if path is None:
            return cls()
        path = Path(path)
        try:
            values = read_kv(path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        data, model, tr = {}, {}, {}
        kw = {}
        data_keys = {f.name for f in fields(DatasetConfig)}
        for k, v in values.items():
            if k in ("dataset_config", "model_config", "train_config"):
                target = {"dataset_config": data, "model_config": model, "train_config": tr}[k]
                try:
                    target.update(read_kv(path.parent / v))
                except OSError as exc:
                    raise ConfigError(f"cannot read {k} {v}: {exc}") from exc
            elif k.startswith("data."):
                data[k[5:]] = v
            elif k.startswith("model."):
                model[k[6:]] = v
            elif k.startswith("train."):
                tr[k[6:]] = v
            elif k == "variant":
                kw["variant"] = v
            elif k == "sizes":
                kw["sizes"] = tuple(int(s) for s in v.split(",") if s.strip())
            elif k == "seed":
                kw["seed"] = int(v)
            elif k in data_keys:
                data[k] = v
            else:
                raise ConfigError(f"unknown config key {k!r}")
        cfg = cls(data, model, tr, **kw)
        cfg.dataset_config()  # validate early
        cfg.model_config()
        cfg.train_config()
        return cfg

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        return self if seed is None else replace(self, seed=int(seed))

    def dataset_config(self, variant: Optional[str] = None, train: Optional[int] = None) -> DatasetConfig:
        values = {**self.data, "seed": self.seed, "variant": variant or self.variant}
        if train is not None:
            values["train"] = train
        return DatasetConfig.from_dict(values)

    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict({**self.model, "seed": self.seed})

    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict({**self.train, "seed": self.seed})


def split_hash(ds: Dataset, split: str) -> str:
    """Digest of a split's manifest rows (ids, seeds, prompts)."""
    h = hashlib.sha256()
    for r in ds.split(split):
        h.update(f"{r.id},{r.family},{r.tier},{r.axis},{r.seed},{r.prompt}\n".encode())
    return h.hexdigest()[:16]


def axis_splits(ds: Dataset) -> dict[str, str]:
    """Axis name -> manifest split; in-distribution is the validation split."""
    present = set(ds.splits())
    out = {}
    for axis in AXES:
        split = "val" if axis == "in-distribution" else f"test-axis:{axis}"
        if split not in present:
            raise MissingSplitError(f"dataset {ds.root} has no {split!r} split")
        out[axis] = split
    return out


def load_axis_data(ds: Dataset, max_seq: Optional[int] = None) -> dict[str, SplitData]:
    return {axis: load_split(ds, split, max_seq) for axis, split in axis_splits(ds).items()}


@dataclass
class AxisReport:
    summary: dict  # axis -> summarize() dict
    rows: dict     # axis -> list[RowScore]

    def table(self) -> list[list]:
        return [[axis, s["n"], s["garment_acc"], s["vertex_l2_cm"], s["text_alignment"],
                 s["failure_rate"]] for axis, s in self.summary.items()]


AXIS_HEADER = ["axis", "n", "garment_acc", "vertex_l2_cm", "text_alignment", "failure_rate"]


def rows_csv(path: Path, report: AxisReport, magnitude: float) -> Path:
    rows = []
    for axis, scores in report.rows.items():
        mag = 0.0 if axis in ("in-distribution", "language") else magnitude
        rows += [[s.id, float(s.garment_acc), float(s.vertex_l2_cm), float(s.text_alignment), axis, mag]
                 for s in scores]
    return write_csv(path, ROW_HEADER, rows)


def run_axis_eval(model: Optional[Model], ds: Dataset, out: Optional[Path] = None,
                  oracle: bool = False, data: Optional[dict[str, SplitData]] = None) -> AxisReport:
    """Greedy-decode every test row and aggregate metrics per axis.

    ``oracle`` scores the ground-truth token streams instead of a model,
    which must give accuracy 1 and Vertex L2 0 everywhere.
    """
    if data is None:
        data = load_axis_data(ds, model.config.max_seq if model is not None else None)
    summary, rows = {}, {}
    for axis in AXES:
        if axis not in data:
            raise MissingSplitError(f"no data for axis {axis!r}")
        scores = evaluate_rows(model, data[axis], oracle=oracle)
        rows[axis] = scores
        summary[axis] = summarize(scores)
    report = AxisReport(summary, rows)
    if out is not None:
        out = Path(out)
        write_csv(out / "axes.csv", AXIS_HEADER, report.table())
        rows_csv(out / "rows.csv", report, ds.config.axis_magnitude)
        vl2 = [s["vertex_l2_cm"] for s in summary.values()]
        top = max(vl2) or 1.0
        (out / "axes.svg").write_text(svg.bar_chart(
            "Metrics per generalization axis", list(AXES),
            {"garment accuracy": [s["garment_acc"] for s in summary.values()],
             f"vertex L2 / {top:.3g} cm": [v / top for v in vl2]},
            xlabel="axis", ylabel="score"), encoding="utf-8")
    return report


def run_text_tiers(model: Optional[Model], ds: Dataset, out: Optional[Path] = None,
                   oracle: bool = False, data: Optional[SplitData] = None,
                   scores: Optional[list[RowScore]] = None) -> dict[str, dict]:
    """Language-axis metrics grouped by prompt tier."""
    if data is None:
        if "test-axis:language" not in ds.splits():
            raise MissingSplitError("dataset has no language split")
        data = load_split(ds, "test-axis:language")
    if scores is None:
        scores = evaluate_rows(model, data, oracle=oracle)
    by_tier = {t: [] for t in TIERS}
    for row, s in zip(data.rows, scores):
        by_tier.setdefault(row.tier, []).append(s)
    missing = [t for t in TIERS if not by_tier[t]]
    if missing:
        raise MissingTierError(f"language split has no rows for tiers {missing}")
    result = {t: summarize(by_tier[t]) for t in TIERS}
    if out is not None:
        out = Path(out)
        write_csv(out / "tiers.csv", ["tier", "n", "garment_acc", "vertex_l2_cm", "text_alignment",
                                      "failure_rate"],
                  [[t, r["n"], r["garment_acc"], r["vertex_l2_cm"], r["text_alignment"],
                    r["failure_rate"]] for t, r in result.items()])
        (out / "tiers.svg").write_text(svg.bar_chart(
            "Metrics per prompt tier", list(TIERS),
            {"garment accuracy": [r["garment_acc"] for r in result.values()],
             "text alignment": [r["text_alignment"] for r in result.values()]},
            xlabel="prompt tier", ylabel="score"), encoding="utf-8")
    return result


def _ensure_dataset(cfg: DatasetConfig, root: Path) -> Dataset:
    if (root / "manifest.csv").exists():
        ds = Dataset(root)
        if ds.config == cfg:
            return ds
    build_dataset(cfg, root)
    return Dataset(root)


def run_ablation(exp: ExperimentConfig, out: Path, variants: Sequence[str] = VARIANTS,
                 datasets: Optional[dict[str, Dataset]] = None,
                 results: Optional[dict[str, tuple[Model, TrainResult]]] = None) -> dict[str, dict]:
    """One training run per dataset variant under an identical step budget.

    ``results`` may hold already-trained (model, result) pairs to reuse.
    Metrics: accuracy and Vertex L2 on the validation split, text
    alignment on the held-out language split.
    """
    out = Path(out)
    tc = exp.train_config()
    datasets = dict(datasets or {})
    results = dict(results or {})
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
        if v not in datasets:
            datasets[v] = _ensure_dataset(exp.dataset_config(v), out / f"data-{_slug(v)}")
    budgets = {v: tc.total_steps(len(datasets[v].split("train"))) for v in variants}
    if len(set(budgets.values())) != 1:
        raise BudgetMismatchError(f"optimizer-step budgets differ across variants: {budgets}")
    table = {}
    for v in variants:
        ds = datasets[v]
        if v in results:
            model, res = results[v]
        else:
            model = build_model(exp.model_config())
            res = train(model, ds, tc, out / f"run-{_slug(v)}")
        if res.steps != budgets[v]:
            raise BudgetMismatchError(f"{v} ran {res.steps} steps, budget {budgets[v]}")
        val = summarize(evaluate_rows(model, load_split(ds, "val")))
        lang = summarize(evaluate_rows(model, load_split(ds, "test-axis:language")))
        table[v] = {"garment_acc": val["garment_acc"], "vertex_l2_cm": val["vertex_l2_cm"],
                    "text_alignment": lang["text_alignment"], "steps": res.steps}
    step_budget = next(iter(budgets.values()))
    comments = [f"optimizer steps per variant: {step_budget}",
                "full-scale reference values, NOT reproducible at desk scale:"]
    comments += [f"  {v}: garment_acc={a} vertex_l2_cm={b} text_alignment={c}"
                 for v, (a, b, c) in PUBLISHED_TABLE.items()]
    write_csv(out / "ablation.csv", ["variant", "garment_acc", "vertex_l2_cm", "text_alignment"],
              [[v, r["garment_acc"], r["vertex_l2_cm"], r["text_alignment"]] for v, r in table.items()],
              comments)
    return table


def _slug(v: str) -> str:
    return v.lstrip("+")


def run_data_scaling(exp: ExperimentConfig, out: Path, sizes: Optional[Sequence[int]] = None,
                     dataset: Optional[Dataset] = None,
                     results: Optional[dict[int, tuple[Model, TrainResult]]] = None) -> dict[int, dict]:
    """Train at each size on the first ``size`` training rows; shared validation split.

    Training rows are seeded by their index alone, so the prefix of a large
    build equals a smaller build exactly.
    """
    out = Path(out)
    sizes = list(sizes or exp.sizes)
    if not sizes or sizes != sorted(sizes) or len(set(sizes)) != len(sizes):
        raise ConfigError(f"sizes must be strictly ascending, got {sizes}")
    if dataset is None:
        dataset = _ensure_dataset(exp.dataset_config(train=max(sizes)), out / "data")
    tc = exp.train_config()
    mc = exp.model_config()
    full = load_split(dataset, "train", mc.max_seq)
    if len(full) < max(sizes):
        raise ConfigError(f"dataset has {len(full)} training rows, sweep needs {max(sizes)}")
    val = load_split(dataset, "val", mc.max_seq)
    vhash = split_hash(dataset, "val")
    results = dict(results or {})
    table = {}
    for n in sizes:
        if n in results:
            model, res = results[n]
        else:
            part = _prefix(full, n)
            model = build_model(mc)
            res = train(model, None, tc, out / f"run-{n}", data=(part, val))
        s = summarize(evaluate_rows(model, val))
        table[n] = {"garment_acc": s["garment_acc"], "vertex_l2_cm": s["vertex_l2_cm"],
                    "failure_rate": s["failure_rate"],
                    "val_ce": res.epochs[-1]["val_ce"] if res.epochs else float("nan"),
                    "steps": res.steps, "val_hash": vhash}
    write_csv(out / "scaling.csv",
              ["size", "garment_acc", "vertex_l2_cm", "failure_rate", "val_ce", "steps", "val_hash"],
              [[n, r["garment_acc"], r["vertex_l2_cm"], r["failure_rate"], r["val_ce"], r["steps"],
                r["val_hash"]] for n, r in table.items()])
    (out / "scaling_acc.svg").write_text(svg.line_chart(
        "Garment accuracy by training-set size", sizes,
        {"garment accuracy": [table[n]["garment_acc"] for n in sizes]},
        xlabel="training samples", ylabel="accuracy"), encoding="utf-8")
    (out / "scaling_vl2.svg").write_text(svg.line_chart(
        "Vertex L2 by training-set size", sizes,
        {"vertex L2 (cm)": [table[n]["vertex_l2_cm"] for n in sizes]},
        xlabel="training samples", ylabel="vertex L2 (cm)"), encoding="utf-8")
    return table


def _prefix(data: SplitData, n: int) -> SplitData:
    return SplitData(data.rows[:n], data.patterns[:n], data.prompts[:n], data.texts[:n],
                     data.streams[:n], data.images[:n])
