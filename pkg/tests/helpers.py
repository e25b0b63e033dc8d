"""Shared test helpers: random patterns, a model gradient probe, CLI replay, acceptance log."""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np

from vlg.pattern import Edge, Panel, SewingPattern, Stitch


def random_quat(rng: np.random.Generator) -> tuple[float, ...]:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return tuple(float(c) for c in q)


def random_panel(rng: np.random.Generator, name: str, max_edges: int = 10) -> Panel:
    """Star-shaped polygon around a random center; some edges bulge outward."""
    n = int(rng.integers(3, max_edges + 1))
    cx, cy = rng.uniform(-100, 100, size=2)
    radius = rng.uniform(8, 60)
    step = 2 * math.pi / n
    # jittered but ordered angles keep the outline simple and non-degenerate
    angles = np.arange(n) * step + rng.uniform(0, 0.3 * step, size=n)
    radii = radius * rng.uniform(0.7, 1.0, size=n)
    pts = [(float(cx + r * math.cos(a)), float(cy + r * math.sin(a))) for r, a in zip(radii, angles)]
    edges = []
    for i, p in enumerate(pts):
        q = pts[(i + 1) % n]
        control = None
        if rng.random() < 0.3:
            mx, my = (p[0] + q[0]) / 2, (p[1] + q[1]) / 2
            bulge = rng.uniform(0.05, 0.3)
            control = (float(mx + bulge * (mx - cx)), float(my + bulge * (my - cy)))
        edges.append(Edge(p, control))
    trans = tuple(float(v) for v in rng.uniform(-200, 200, size=3))
    return Panel(name, tuple(edges), random_quat(rng), trans)


def random_pattern(rng: np.random.Generator, max_panels: int = 5, max_edges: int = 10) -> SewingPattern:
    n = int(rng.integers(1, max_panels + 1))
    names = rng.permutation([f"p{k}" for k in range(n)])
    panels = [random_panel(rng, str(nm), max_edges) for nm in names]
    sides = [(p.name, e) for p in panels for e in range(len(p.edges))]
    order = rng.permutation(len(sides))
    k = int(rng.integers(0, len(sides) // 2 + 1))
    stitches = [Stitch(sides[order[2 * i]], sides[order[2 * i + 1]]) for i in range(k)]
    return SewingPattern(tuple(panels), tuple(stitches))


def coord_vector(p: SewingPattern) -> np.ndarray:
    vals = []
    for q in p.panels:
        vals += list(q.translation)
        for e in q.edges:
            vals += list(e.start) + list(e.control or ())
    return np.array(vals)


def model_grad_error(model, batch, names, coords: int = 12, eps: float = 1e-5, seed: int = 0) -> float:
    """Max relative error of taped loss gradients against central differences.

    ``model`` should be float64. For each parameter in ``names`` a few random
    coordinates are perturbed; the denominator is max(|a|, |n|, 1e-8).
    """
    from vlg.autodiff import Tape
    from vlg.model import forward_batch, loss

    def total():
        lg, rg = forward_batch(model, batch.tokens, batch.params, batch.enc, batch.targets)
        return loss(lg, rg, batch)[0]

    for n in names:
        model.params[n].zero_grad()
    with Tape() as tape:
        out = total()
    tape.backward(out)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in names:
        t = model.params[n]
        analytic = t.grad.copy()
        flat = t.data.reshape(-1)
        for i in rng.choice(flat.size, size=min(coords, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + eps
            hi = total().item()
            flat[i] = old - eps
            lo = total().item()
            flat[i] = old
            num = (hi - lo) / (2 * eps)
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    return worst


# ------------------------------------------------------------------ cli

CLI_CONFIG = """\
train=8
val=4
test_per_axis=6
model.d_model=16
model.n_layers=1
model.n_heads=2
model.encoder_layers=1
train.epochs=2
train.micro_batch=2
train.accum_steps=2
train.peak_lr=0.003
train.val_subsample=2
sizes=4,8
"""

CLI_SEQUENCE = [
    ("datagen", ["datagen", "--config", "exp.cfg", "--seed", "1", "--out", "data"]),
    ("train", ["train", "--config", "exp.cfg", "--seed", "1", "--data", "data", "--out", "run"]),
    ("eval", ["eval", "--checkpoint", "run/checkpoint", "--data", "data", "--out", "eval"]),
    ("eval-oracle", ["eval", "--oracle", "--data", "data", "--out", "oracle"]),
    ("tiers", ["tiers", "--checkpoint", "run/checkpoint", "--data", "data", "--out", "tiers"]),
    ("tok-roundtrip", ["tok", "roundtrip", "data/patterns/val-00000.garment.json"]),
    ("tok-encode", ["tok", "encode", "data/patterns/train-00003.garment.json"]),
    ("oracle", ["oracle", "assignment", "--trials", "1000", "--max", "6"]),
    ("ablate", ["ablate", "--config", "exp.cfg", "--out", "ablate"]),
    ("scale", ["scale", "--config", "exp.cfg", "--out", "scale"]),
    ("report", ["report", "--out", "eval"]),
]


def snapshot(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def cli_replay(root: Path, capsys) -> dict:
    """Run every CLI command in order inside ``root``; record rc, stdout and files."""
    from vlg.cli import main

    root.mkdir()
    (root / "exp.cfg").write_text(CLI_CONFIG)
    cwd = os.getcwd()
    os.chdir(root)
    results = {}
    try:
        for name, argv in CLI_SEQUENCE:
            rc = main(argv)
            cap = capsys.readouterr()
            results[name] = (rc, cap.out, snapshot(root))
    finally:
        os.chdir(cwd)
    return results


# ----------------------------------------------------------- acceptance

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(n: int, name: str, ok: bool, detail: str = "") -> bool:
    """Log one acceptance outcome; the terminal summary prints them in order."""
    ACCEPTANCE[n] = (name, bool(ok), detail)
    print(f"{'PASS' if ok else 'FAIL'} criterion {n} {name}: {detail}")
    return bool(ok)
