"""Parametric skirt and tee garments with ground-truth sewing patterns.

Randomness comes from numpy's Philox counter-based generator; every sample
records the 64-bit seed its generator was built from, so a ParamRecord alone
reproduces its pattern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..pattern import Edge, Panel, SewingPattern, Stitch

__all__ = ["RNG_NAME", "make_rng", "ParamRecord", "sample_garment", "build_pattern",
           "silhouette_polygons", "FAMILIES"]

RNG_NAME = "numpy.random.Philox"
FAMILIES = ("skirt", "tee")

SHOULDER_DROP = 4.0  # cm the side seam top sits below the neck corners
SLEEVE_CLEARANCE = 2.0  # cm the lowest sleeve corner keeps above the hem
_S45 = math.sqrt(0.5)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class ParamRecord:
    family: str
    seed: int = 0
    # skirt
    waist: Optional[float] = None  # half-width w
    hem: Optional[float] = None  # half-width h
    length: Optional[float] = None  # L
    hem_offset: Optional[float] = None  # c; 0 means a straight hem
    # tee
    body_width: Optional[float] = None  # half-width bw
    body_length: Optional[float] = None  # bl
    neck_depth: Optional[float] = None  # nd
    sleeve_length: Optional[float] = None  # sl; None means sleeveless
    sleeve_width: Optional[float] = None  # sw

    @property
    def has_sleeves(self) -> bool:
        return self.sleeve_length is not None


def _clip(v, lo, hi):
    return float(min(max(v, lo), hi))


def clamp(p: ParamRecord) -> ParamRecord:
    """Force every field into its documented range."""
    if p.family == "skirt":
        w = _clip(p.waist, 15, 30)
        return ParamRecord("skirt", p.seed, waist=w, hem=_clip(p.hem, w, w + 40),
                           length=_clip(p.length, 30, 90), hem_offset=_clip(p.hem_offset, 0, 8))
    if p.family == "tee":
        bl = _clip(p.body_length, 45, 80)
        sl = sw = None
        if p.sleeve_length is not None:
            sw = _clip(p.sleeve_width, 8, 16)
            # keep the hanging sleeve above the hem so the hem stays the lowest point
            reach = (bl - SHOULDER_DROP - SLEEVE_CLEARANCE) / _S45 - sw
            sl = _clip(min(p.sleeve_length, reach), 10, 45)
        return ParamRecord("tee", p.seed, body_width=_clip(p.body_width, 20, 35),
                           body_length=bl, neck_depth=_clip(p.neck_depth, 3, 12),
                           sleeve_length=sl, sleeve_width=sw)
    raise ValueError(f"unknown family {p.family!r}")


def sample_garment(family: str, rng: np.random.Generator, seed: int = 0
                   ) -> tuple[SewingPattern, ParamRecord]:
    """Draw garment parameters and build the pattern.

    Half of the skirts get a curved hem (c ~ U[2, 8]); a third of the tees are
    sleeveless.
    """
    if family == "skirt":
        w = rng.uniform(15, 30)
        params = ParamRecord(
            "skirt", seed, waist=w, hem=w + rng.uniform(0, 40), length=rng.uniform(30, 90),
            hem_offset=rng.uniform(2, 8) if rng.random() < 0.5 else 0.0)
    elif family == "tee":
        bw, bl, nd = rng.uniform(20, 35), rng.uniform(45, 80), rng.uniform(3, 12)
        if rng.random() < 1 / 3:
            params = ParamRecord("tee", seed, body_width=bw, body_length=bl, neck_depth=nd)
        else:
            params = ParamRecord("tee", seed, body_width=bw, body_length=bl, neck_depth=nd,
                                 sleeve_length=rng.uniform(10, 45),
                                 sleeve_width=rng.uniform(8, 16))
    else:
        raise ValueError(f"unknown family {family!r}")
    params = clamp(params)
    return build_pattern(params), params


def _loop(vertices, controls=None) -> tuple[Edge, ...]:
    controls = controls or {}
    return tuple(Edge((float(x), float(y)), controls.get(i)) for i, (x, y) in enumerate(vertices))


def _neck_half_width(bw: float) -> float:
    return 0.4 * bw


def _body_vertices(p: ParamRecord):
    bw, bl = p.body_width, p.body_length
    nw = _neck_half_width(bw)
    return [(-bw, 0.0), (bw, 0.0), (bw, bl - SHOULDER_DROP), (nw, bl), (-nw, bl),
            (-bw, bl - SHOULDER_DROP)]


def build_pattern(p: ParamRecord) -> SewingPattern:
    """Deterministic pattern for a parameter record."""
    ident = (1.0, 0.0, 0.0, 0.0)
    if p.family == "skirt":
        w, h, L, c = p.waist, p.hem, p.length, p.hem_offset
        verts = [(-h, 0.0), (h, 0.0), (w, L), (-w, L)]
        ctrl = {0: (0.0, -c)} if c > 0 else {}
        front = Panel("front", _loop(verts, ctrl), ident, (0.0, 0.0, 10.0))
        back = Panel("back", _loop(verts, ctrl), ident, (0.0, 0.0, -10.0))
        stitches = (Stitch(("back", 1), ("front", 1)), Stitch(("back", 3), ("front", 3)))
        return SewingPattern((back, front), stitches)
    bl, nd = p.body_length, p.neck_depth
    verts = _body_vertices(p)
    front = Panel("front", _loop(verts, {3: (0.0, bl - 2 * nd)}), ident, (0.0, 0.0, 12.0))
    back = Panel("back", _loop(verts), ident, (0.0, 0.0, -12.0))
    panels = [back, front]
    stitches = [Stitch(("back", k), ("front", k)) for k in (1, 2, 4, 5)]
    if p.has_sleeves:
        sl, sw = p.sleeve_length, p.sleeve_width
        rect = [(0.0, 0.0), (sw, 0.0), (sw, sl), (0.0, sl)]
        q = math.sin(math.pi / 8)
        qr = math.cos(math.pi / 8)
        lift = bl - SHOULDER_DROP - 10.0
        for name, sign in (("sleeve_l", -1.0), ("sleeve_r", 1.0)):
            panels.append(Panel(name, _loop(rect), (qr, 0.0, 0.0, sign * q),
                                (sign * (p.body_width + 10.0), lift, 0.0)))
            stitches.append(Stitch((name, 1), (name, 3)))  # underarm seam
    return SewingPattern(tuple(panels), tuple(stitches))


def silhouette_polygons(p: ParamRecord, n: int = 64) -> list[np.ndarray]:
    """Front-view outline(s) in cm, y up.

    Skirt: the front panel. Tee: the front body panel plus one rectangle per
    sleeve hanging at 45 degrees from each shoulder corner.
    """
    from ..pattern import flatten_panel

    pattern = build_pattern(p)
    front = next(q for q in pattern.panels if q.name == "front")
    polys = [flatten_panel(front, n)[:-1]]
    if p.family == "tee" and p.has_sleeves:
        sl, sw = p.sleeve_length, p.sleeve_width
        for sign in (1.0, -1.0):
            corner = np.array([sign * p.body_width, p.body_length - SHOULDER_DROP])
            axis = np.array([sign * _S45, -_S45])
            up = np.array([sign * _S45, _S45])
            polys.append(np.array([corner, corner + sl * axis,
                                   corner + sl * axis - sw * up, corner - sw * up]))
    return polys
