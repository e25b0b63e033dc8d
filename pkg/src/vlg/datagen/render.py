"""Deterministic 64x64 grayscale silhouette renderer.

Polygons are scan-converted at pixel centers with the even-odd rule and no
anti-aliasing. The garment is rasterized once on a padded canvas and the
visible window is cropped out, so an integer offset is an exact translation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..errors import OutOfCanvasWarning
from .garments import ParamRecord, make_rng, silhouette_polygons

__all__ = ["RenderSpec", "DEFAULT_SPEC", "BACKGROUNDS", "FILLS", "AXES", "render",
           "silhouette_mask", "perturb_spec", "write_pgm", "read_pgm", "spec_changes"]

CANVAS = 64
BASE_SCALE = 0.8
BACKGROUNDS = ("white", "gray128", "checker8", "noise")
FILLS = ("gray64", "stripes6", "dots4", "noise")
AXES = ("visual", "position", "scale", "appearance")

_PAD = 64
_FG = 64
_BG = 255


@dataclass(frozen=True)
class RenderSpec:
    canvas: int = CANVAS
    zoom: float = 1.0
    offset: tuple[int, int] = (0, 0)  # (dx right, dy down) in pixels
    background: str = "white"
    fill: str = "gray64"
    # strength of a non-default background / fill, in [0, 1]
    background_contrast: float = 1.0
    fill_contrast: float = 1.0
    noise_seed: int = 0


DEFAULT_SPEC = RenderSpec()

# Fields that define a perturbation axis; contrasts and the noise seed only
# qualify a non-default background or fill.
PRIMARY_FIELDS = ("zoom", "offset", "background", "fill")


def spec_changes(spec: RenderSpec) -> list[str]:
    return [f for f in PRIMARY_FIELDS if getattr(spec, f) != getattr(DEFAULT_SPEC, f)]


def _scan_fill(poly: np.ndarray, size: int) -> np.ndarray:
    """Even-odd fill of one polygon (pixel coords, y down) on a size x size grid."""
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    rows = np.arange(size) + 0.5
    yc = rows[:, None]
    # half-open rule: an edge covers yc when min(y) <= yc < max(y)
    crosses = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (yc - y0) / (y1 - y0)
    xs = np.where(crosses, x0 + t * (x1 - x0), np.inf)
    xs.sort(axis=1)
    mask = np.zeros((size, size + 1), dtype=np.int32)
    n_pairs = xs.shape[1] // 2
    for k in range(n_pairs):
        xa, xb = xs[:, 2 * k], xs[:, 2 * k + 1]
        ok = np.isfinite(xb)
        # columns whose centers c + 0.5 lie in [xa, xb)
        ca = np.clip(np.ceil(xa[ok] - 0.5), 0, size).astype(np.int64)
        cb = np.clip(np.ceil(xb[ok] - 0.5), 0, size).astype(np.int64)
        r = np.nonzero(ok)[0]
        good = cb > ca
        np.add.at(mask, (r[good], ca[good]), 1)
        np.add.at(mask, (r[good], cb[good]), -1)
    return np.cumsum(mask, axis=1)[:, :size] > 0


def silhouette_mask(params: ParamRecord, spec: RenderSpec = DEFAULT_SPEC,
                    padded: bool = False) -> np.ndarray:
    """Boolean garment mask, cropped to the canvas unless ``padded``."""
    size = spec.canvas
    polys = silhouette_polygons(params)
    allpts = np.concatenate(polys)
    xmin, ymin = allpts.min(axis=0)
    xmax, ymax = allpts.max(axis=0)
    height_px = int(round(BASE_SCALE * spec.zoom * size))
    scale = height_px / (ymax - ymin)
    top = (size - height_px) // 2
    xmid = 0.5 * (xmin + xmax)
    big = size + 2 * _PAD
    full = np.zeros((big, big), dtype=bool)
    for poly in polys:
        px = np.empty_like(poly)
        px[:, 0] = _PAD + size / 2 + scale * (poly[:, 0] - xmid)
        px[:, 1] = _PAD + top + scale * (ymax - poly[:, 1])
        full |= _scan_fill(px, big)
    if padded:
        return full
    dx, dy = spec.offset
    r0, c0 = _PAD - dy, _PAD - dx
    return full[r0:r0 + size, c0:c0 + size]


def _layer(kind: str, contrast: float, base: int, span: int, size: int, rng) -> np.ndarray:
    r, c = np.mgrid[0:size, 0:size]
    delta = int(round(span * contrast))
    if kind in ("white", "gray64"):
        return np.full((size, size), base, dtype=np.int64)
    if kind == "gray128":
        return np.full((size, size), base - delta, dtype=np.int64)
    if kind == "checker8":
        return np.where(((r // 8) + (c // 8)) % 2 == 0, base, base - delta)
    if kind == "stripes6":
        return np.where(((r + c) // 3) % 2 == 0, base, base + delta)
    if kind == "dots4":
        return np.where((r % 4 == 1) & (c % 4 == 1), base + delta, base)
    if kind == "noise":
        sign = -1 if base == _BG else 1
        return base + sign * rng.integers(0, delta + 1, size=(size, size))
    raise ValueError(f"unknown texture {kind!r}")


def render(params: ParamRecord, spec: RenderSpec = DEFAULT_SPEC) -> np.ndarray:
    """Rasterize the garment's front silhouette as a uint8 image.

    Warns with :class:`OutOfCanvasWarning` when less than half of the
    silhouette remains on the canvas.
    """
    size = spec.canvas
    full = silhouette_mask(params, spec, padded=True)
    dx, dy = spec.offset
    r0, c0 = _PAD - dy, _PAD - dx
    mask = full[r0:r0 + size, c0:c0 + size]
    total = int(full.sum())
    if total and mask.sum() < 0.5 * total:
        warnings.warn(f"only {mask.sum()}/{total} silhouette pixels visible",
                      OutOfCanvasWarning, stacklevel=2)
    rng = make_rng(spec.noise_seed)
    bg = _layer(spec.background, spec.background_contrast, _BG, 191 if spec.background != "gray128" else 127, size, rng)
    fg = _layer(spec.fill, spec.fill_contrast, _FG, 160, size, rng)
    return np.clip(np.where(mask, fg, bg), 0, 255).astype(np.uint8)


def perturb_spec(axis: str, magnitude: float, rng: np.random.Generator) -> RenderSpec:
    """Vary exactly one render field away from the in-distribution default."""
    if not 0.0 <= magnitude <= 1.0:
        raise ValueError("magnitude must lie in [0, 1]")
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}")
    if magnitude == 0.0:
        return DEFAULT_SPEC
    seed = int(rng.integers(0, 2**63))
    if axis == "visual":
        bg = str(rng.choice(BACKGROUNDS[1:]))
        return replace(DEFAULT_SPEC, background=bg, background_contrast=magnitude, noise_seed=seed)
    if axis == "position":
        k = int(round(16 * magnitude))
        if k == 0:
            return DEFAULT_SPEC
        while True:
            dx, dy = (int(v) for v in rng.integers(-k, k + 1, size=2))
            if (dx, dy) != (0, 0):
                return replace(DEFAULT_SPEC, offset=(dx, dy))
    if axis == "scale":
        z = float(rng.uniform(1 - 0.5 * magnitude, 1 + 0.5 * magnitude))
        return replace(DEFAULT_SPEC, zoom=z)
    fill = str(rng.choice(FILLS[1:]))
    return replace(DEFAULT_SPEC, fill=fill, fill_contrast=magnitude, noise_seed=seed)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(image, np.uint8).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    header, pos = [], 0
    while len(header) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        header.append(data[pos:end])
        pos = end
    pos += 1  # single whitespace byte after maxval
    if header[0] != b"P5" or int(header[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(header[1]), int(header[2])
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w).copy()


def spec_fields() -> list[str]:
    return [f.name for f in fields(RenderSpec)]
