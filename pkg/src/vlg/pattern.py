"""Sewing-pattern data model, validation, canonical I/O and boundary geometry.

A pattern is a set of panels (closed 2D loops of straight or quadratic Bézier
edges, in cm, placed in 3D by a quaternion and a translation) plus stitches
that join panel edges. Edge ``i`` ends where edge ``i+1`` starts, cyclically,
so a loop is closed by construction.

File format (``.garment.json``)::

    {"version":1,
    "panels":[
    {"name":..,"rotation":[w,x,y,z],"translation":[tx,ty,tz],"edges":[{"start":[x,y],"control":[cx,cy]|null},..]},
    ..
    ],
    "stitches":[
    [{"panel":..,"edge":i},{"panel":..,"edge":j}],
    ..
    ]}
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateError,
    InvariantError,
    PatternSyntaxError,
    SchemaError,
    SelfIntersectionWarning,
)

__all__ = [
    "Edge",
    "Panel",
    "Stitch",
    "SewingPattern",
    "Issue",
    "ValidationReport",
    "parse_pattern",
    "serialize_pattern",
    "canonicalize",
    "flatten_edge",
    "flatten_panel",
    "resample_boundary",
    "panel_area",
    "validate",
    "COORD_LIMIT",
]

Point = tuple[float, float]

COORD_LIMIT = 300.0
QUAT_TOL = 1e-6
MIN_AREA = 1.0
FORMAT_VERSION = 1
BOUNDARY_SUBDIV = 64


@dataclass(frozen=True)
class Edge:
    start: Point
    control: Optional[Point] = None

    @property
    def is_curve(self) -> bool:
        return self.control is not None


@dataclass(frozen=True)
class Panel:
    name: str
    edges: tuple[Edge, ...]
    rotation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def edge_end(self, i: int) -> Point:
        return self.edges[(i + 1) % len(self.edges)].start


@dataclass(frozen=True)
class Stitch:
    side_a: tuple[str, int]
    side_b: tuple[str, int]


@dataclass(frozen=True)
class SewingPattern:
    panels: tuple[Panel, ...] = ()
    stitches: tuple[Stitch, ...] = ()
    version: int = FORMAT_VERSION

    def panel_index(self) -> dict[str, int]:
        return {p.name: i for i, p in enumerate(self.panels)}


@dataclass(frozen=True)
class Issue:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.code}: {self.message}"


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}

    def __len__(self) -> int:
        return len(self.issues)

    def __contains__(self, code: str) -> bool:
        return code in self.codes()


# ---------------------------------------------------------------------------
# geometry


def flatten_edge(start: Sequence[float], end: Sequence[float], n: int,
                 control: Optional[Sequence[float]] = None) -> np.ndarray:
    """Polyline of ``n + 1`` points along an edge.

    Straight edges are interpolated uniformly; Bézier edges are evaluated at
    ``t = k/n``. The first and last points are exactly ``start`` and ``end``.
    """
    if n < 1:
        raise ValueError("subdivision count must be >= 1")
    p0 = np.asarray(start, dtype=np.float64)
    p2 = np.asarray(end, dtype=np.float64)
    t = (np.arange(n + 1, dtype=np.float64) / n)[:, None]
    if control is None:
        pts = p0 + t * (p2 - p0)
    else:
        p1 = np.asarray(control, dtype=np.float64)
        pts = (1 - t) ** 2 * p0 + 2 * t * (1 - t) * p1 + t**2 * p2
    pts[0] = p0
    pts[-1] = p2
    return pts


def flatten_panel(panel: Panel, n: int = BOUNDARY_SUBDIV) -> np.ndarray:
    """Closed boundary polyline; the first point is repeated at the end."""
    chunks = []
    for i, e in enumerate(panel.edges):
        pts = flatten_edge(e.start, panel.edge_end(i), n, e.control)
        chunks.append(pts[:-1])
    chunks.append(np.asarray([panel.edges[0].start], dtype=np.float64))
    return np.concatenate(chunks)


def panel_area(panel: Panel, n: int = BOUNDARY_SUBDIV) -> float:
    """Unsigned shoelace area of the flattened boundary."""
    pts = flatten_panel(panel, n)
    x, y = pts[:-1, 0], pts[:-1, 1]
    xn, yn = pts[1:, 0], pts[1:, 1]
    return abs(0.5 * float(np.sum(x * yn - xn * y)))


def resample_boundary(panel: Panel, count: int) -> np.ndarray:
    """``count`` points at equal arc-length spacing around the panel.

    Sampling starts at edge 0's start point and follows the edge order.
    """
    if count < 3:
        raise ValueError("sample count must be >= 3")
    pts = flatten_panel(panel, BOUNDARY_SUBDIV)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if not total >= 1e-9:
        raise DegenerateError(f"boundary length {total:.3g} cm", panel.name)
    s = np.arange(count, dtype=np.float64) * (total / count)
    idx = np.searchsorted(cum, s, side="right") - 1
    idx = np.clip(idx, 0, len(seg_len) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(seg_len[idx] > 0, (s - cum[idx]) / seg_len[idx], 0.0)
    return pts[idx] + frac[:, None] * seg[idx]


# ---------------------------------------------------------------------------
# canonical form


def canonicalize(p: SewingPattern) -> SewingPattern:
    """Sort panels by name, order each stitch's sides, sort stitches.

    Geometry is untouched. Stitch sides are compared by (panel index in the
    sorted order, edge index), which coincides with (name, edge) ordering.
    """
    panels = tuple(sorted(p.panels, key=lambda q: q.name))
    index = {q.name: i for i, q in enumerate(panels)}

    def key(side):
        return (index.get(side[0], len(panels)), side[0], side[1])

    stitches = []
    for s in p.stitches:
        a, b = s.side_a, s.side_b
        if key(b) < key(a):
            a, b = b, a
        stitches.append(Stitch(a, b))
    stitches.sort(key=lambda s: (key(s.side_a), key(s.side_b)))
    return SewingPattern(panels, tuple(stitches), p.version)


# ---------------------------------------------------------------------------
# validation


def _finite_bounded(values: Iterable[float], path: str, issues: list[Issue]) -> bool:
    good = True
    for v in values:
        if not math.isfinite(v):
            issues.append(Issue("coordinate finite", path, f"non-finite value {v!r}"))
            good = False
        elif abs(v) > COORD_LIMIT:
            issues.append(Issue("coordinate bound", path, f"|{v}| > {COORD_LIMIT} cm"))
            good = False
    return good


def _segments_cross(pts: np.ndarray) -> bool:
    """True when two non-adjacent segments of a closed polyline intersect."""
    a = pts[:-1]
    b = pts[1:]
    m = len(a)
    if m < 4:
        return False

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
            q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    ai, bi = a[:, None, :], b[:, None, :]
    aj, bj = a[None, :, :], b[None, :, :]
    o1 = orient(ai, bi, aj)
    o2 = orient(ai, bi, bj)
    o3 = orient(aj, bj, ai)
    o4 = orient(aj, bj, bi)
    cross = (o1 * o2 < 0) & (o3 * o4 < 0)
    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    return bool(np.any(cross[i[keep], j[keep]]))


def validate(p: SewingPattern) -> ValidationReport:
    """Collect every violated invariant, each tagged with a field path."""
    report = ValidationReport()
    issues = report.issues
    if p.version != FORMAT_VERSION:
        issues.append(Issue("version", "version", f"unsupported version {p.version}"))
    seen: dict[str, int] = {}
    for i, panel in enumerate(p.panels):
        path = f"panels[{i}]"
        if panel.name in seen:
            issues.append(Issue("duplicate name", f"{path}.name",
                                f"panel name {panel.name!r} already used"))
        seen.setdefault(panel.name, i)
        q = panel.rotation
        if _finite_bounded(q, f"{path}.rotation", []):
            norm = math.sqrt(sum(c * c for c in q))
            if abs(norm - 1.0) > QUAT_TOL:
                issues.append(Issue("rotation norm", f"{path}.rotation",
                                    f"quaternion norm {norm:.9g} != 1"))
        else:
            issues.append(Issue("rotation norm", f"{path}.rotation", "non-finite quaternion"))
        _finite_bounded(panel.translation, f"{path}.translation", issues)
        coords_ok = True
        for k, e in enumerate(panel.edges):
            coords_ok &= _finite_bounded(e.start, f"{path}.edges[{k}].start", issues)
            if e.control is not None:
                coords_ok &= _finite_bounded(e.control, f"{path}.edges[{k}].control", issues)
        if len(panel.edges) < 3:
            issues.append(Issue("edge count", f"{path}.edges",
                                f"{len(panel.edges)} edges, need >= 3"))
        elif coords_ok:
            area = panel_area(panel)
            if not area > MIN_AREA:
                issues.append(Issue("degenerate area", f"{path}.edges",
                                    f"area {area:.6g} cm^2 <= {MIN_AREA}"))
            elif _segments_cross(flatten_panel(panel, 8)):
                report.warnings.append(Issue("self intersection", f"{path}.edges",
                                             "boundary crosses itself"))
    used: dict[tuple[str, int], int] = {}
    for i, s in enumerate(p.stitches):
        path = f"stitches[{i}]"
        for label, side in (("side_a", s.side_a), ("side_b", s.side_b)):
            name, edge = side
            if name not in seen:
                issues.append(Issue("stitch reference", f"{path}.{label}",
                                    f"unknown panel {name!r}"))
            elif not 0 <= edge < len(p.panels[seen[name]].edges):
                issues.append(Issue("stitch reference", f"{path}.{label}",
                                    f"edge {edge} out of range for {name!r}"))
        if s.side_a == s.side_b:
            issues.append(Issue("stitch self", path, "stitch joins an edge to itself"))
        for side in {s.side_a, s.side_b}:
            if side in used:
                issues.append(Issue("stitch reuse", path,
                                    f"{side} already used by stitches[{used[side]}]"))
            else:
                used[side] = i
    return report


# ---------------------------------------------------------------------------
# parsing


def _fail_constant(name):
    raise ValueError(f"non-standard constant {name}")


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise SchemaError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _expect_keys(obj, keys: tuple[str, ...], path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected object, got {type(obj).__name__}", path)
    missing = [k for k in keys if k not in obj]
    extra = [k for k in obj if k not in keys]
    if missing:
        raise SchemaError(f"missing field {missing[0]!r}", path)
    if extra:
        raise SchemaError(f"unexpected field {extra[0]!r}", path)


def _numbers(obj, arity: int, path: str) -> tuple[float, ...]:
    if not isinstance(obj, list):
        raise SchemaError("expected array of numbers", path)
    if len(obj) != arity:
        raise SchemaError(f"expected {arity} numbers, got {len(obj)}", path)
    out = []
    for v in obj:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"expected number, got {type(v).__name__}", path)
        try:
            out.append(float(v))
        except OverflowError:
            out.append(math.copysign(math.inf, v))
    return tuple(out)


def _side(obj, path: str) -> tuple[str, int]:
    _expect_keys(obj, ("panel", "edge"), path)
    name, edge = obj["panel"], obj["edge"]
    if not isinstance(name, str):
        raise SchemaError("panel must be a string", f"{path}.panel")
    if isinstance(edge, bool) or not isinstance(edge, int):
        raise SchemaError("edge must be an integer", f"{path}.edge")
    return name, edge


def _build(doc) -> SewingPattern:
    _expect_keys(doc, ("version", "panels", "stitches"), "")
    version = doc["version"]
    if isinstance(version, bool) or not isinstance(version, int):
        raise SchemaError("version must be an integer", "version")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported version {version}", "version")
    if not isinstance(doc["panels"], list):
        raise SchemaError("expected array", "panels")
    if not isinstance(doc["stitches"], list):
        raise SchemaError("expected array", "stitches")
    panels = []
    for i, pd in enumerate(doc["panels"]):
        path = f"panels[{i}]"
        _expect_keys(pd, ("name", "rotation", "translation", "edges"), path)
        if not isinstance(pd["name"], str):
            raise SchemaError("name must be a string", f"{path}.name")
        rot = _numbers(pd["rotation"], 4, f"{path}.rotation")
        trans = _numbers(pd["translation"], 3, f"{path}.translation")
        if not isinstance(pd["edges"], list):
            raise SchemaError("expected array", f"{path}.edges")
        edges = []
        for k, ed in enumerate(pd["edges"]):
            epath = f"{path}.edges[{k}]"
            _expect_keys(ed, ("start", "control"), epath)
            start = _numbers(ed["start"], 2, f"{epath}.start")
            control = None
            if ed["control"] is not None:
                control = _numbers(ed["control"], 2, f"{epath}.control")
            edges.append(Edge(start, control))
        panels.append(Panel(pd["name"], tuple(edges), rot, trans))
    stitches = []
    for i, sd in enumerate(doc["stitches"]):
        path = f"stitches[{i}]"
        if not isinstance(sd, list) or len(sd) != 2:
            raise SchemaError("stitch must be a pair", path)
        stitches.append(Stitch(_side(sd[0], f"{path}[0]"), _side(sd[1], f"{path}[1]")))
    return SewingPattern(tuple(panels), tuple(stitches), version)


def parse_pattern(data: bytes | str) -> SewingPattern:
    """Parse and validate a pattern document.

    Raises:
        PatternSyntaxError: not UTF-8 or not JSON.
        SchemaError: wrong structure.
        InvariantError: structure fine, pattern invalid (first issue reported,
            all issues attached as ``.issues``).
    """
    try:
        text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
        doc = json.loads(text, parse_constant=_fail_constant,
                         object_pairs_hook=_no_duplicates)
    except SchemaError:
        raise
    except (UnicodeDecodeError, ValueError, RecursionError, TypeError) as exc:
        raise PatternSyntaxError(str(exc)) from None
    pattern = _build(doc)
    report = validate(pattern)
    if report.issues:
        first = report.issues[0]
        raise InvariantError(f"{first.code}: {first.message}", first.path, report.issues)
    for w in report.warnings:
        warnings.warn(str(w), SelfIntersectionWarning, stacklevel=2)
    return pattern


# ---------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _vec(values: Sequence[float]) -> str:
    return "[" + ",".join(_fmt(v) for v in values) + "]"


def _panel_line(p: Panel) -> str:
    edges = ",".join(
        '{"start":%s,"control":%s}' % (_vec(e.start), "null" if e.control is None else _vec(e.control))
        for e in p.edges
    )
    return '{"name":%s,"rotation":%s,"translation":%s,"edges":[%s]}' % (
        json.dumps(p.name, ensure_ascii=False), _vec(p.rotation), _vec(p.translation), edges)


def _side_json(side: tuple[str, int]) -> str:
    return '{"panel":%s,"edge":%d}' % (json.dumps(side[0], ensure_ascii=False), side[1])


def serialize_pattern(p: SewingPattern) -> bytes:
    """Canonical UTF-8 document: sorted panels and stitches, six-digit floats."""
    p = canonicalize(p)
    lines = ['{"version":%d,' % p.version]
    if p.panels:
        lines.append('"panels":[')
        lines.append(",\n".join(_panel_line(q) for q in p.panels))
        lines.append("],")
    else:
        lines.append('"panels":[],')
    if p.stitches:
        lines.append('"stitches":[')
        lines.append(",\n".join(
            "[%s,%s]" % (_side_json(s.side_a), _side_json(s.side_b)) for s in p.stitches))
        lines.append("]}")
    else:
        lines.append('"stitches":[]}')
    return ("\n".join(lines) + "\n").encode("utf-8")
