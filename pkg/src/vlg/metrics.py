"""Garment accuracy, Vertex L2 and the text-alignment proxy.

Vertex L2 compares panels in their own 2D frame (placement is ignored): each
boundary is resampled at 25 equal arc-length points and the mean point
distance is the panel cost. Panels are paired by optimal assignment; a panel
left without a partner costs as much as its distance to its own centroid.

Garment accuracy is topological: equal panel counts, equal edge counts for
every matched pair and identical stitch sets after relabeling predicted
panels through the Vertex L2 assignment.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from typing import Mapping, Optional

import numpy as np

from .assignment import PanelAssignment, assignment_solve
from .errors import EmptyConstraintWarning, EmptyPatternWarning, UnclassifiableError
from .pattern import Panel, SewingPattern, canonicalize, flatten_panel, resample_boundary

__all__ = [
    "SAMPLES",
    "AttributeRecord",
    "panel_cost",
    "point_penalty",
    "match_panels",
    "vertex_l2",
    "garment_accuracy",
    "measure_attributes",
    "text_alignment",
    "SKIRT_LENGTH_CUTS",
    "TEE_LENGTH_CUTS",
    "FLARE_CUTS",
    "SLEEVE_CUT",
]

SAMPLES = 25

SKIRT_LENGTH_CUTS = (45.0, 70.0)
TEE_LENGTH_CUTS = (55.0, 70.0)
FLARE_CUTS = (1.15, 1.6)
SLEEVE_CUT = 25.0


def panel_cost(a: Panel, b: Panel) -> float:
    """Mean distance (cm) between corresponding boundary samples."""
    pa = resample_boundary(a, SAMPLES)
    pb = resample_boundary(b, SAMPLES)
    return float(np.mean(np.hypot(*(pa - pb).T)))


def point_penalty(a: Panel) -> float:
    """Cost of ``a`` against a panel collapsed onto its boundary centroid."""
    pa = resample_boundary(a, SAMPLES)
    return float(np.mean(np.hypot(*(pa - pa.mean(axis=0)).T)))


def match_panels(pred: SewingPattern, gt: SewingPattern) -> Optional[PanelAssignment]:
    if not pred.panels or not gt.panels:
        return None
    cost = [[panel_cost(a, b) for b in gt.panels] for a in pred.panels]
    return assignment_solve(cost)


def vertex_l2(pred: SewingPattern, gt: SewingPattern) -> float:
    """Mean matched panel cost with unmatched panels penalised (cm)."""
    pred, gt = canonicalize(pred), canonicalize(gt)
    if not pred.panels and not gt.panels:
        warnings.warn("both patterns empty; Vertex L2 is 0", EmptyPatternWarning, stacklevel=2)
        return 0.0
    asg = match_panels(pred, gt)
    if asg is None:
        terms = [point_penalty(q) for q in pred.panels + gt.panels]
        return math.fsum(terms) / len(terms)
    cost = asg.total_cost
    penalties = [point_penalty(pred.panels[i]) for i in asg.unmatched_pred]
    penalties += [point_penalty(gt.panels[j]) for j in asg.unmatched_gt]
    count = len(asg.pairs) + len(penalties)
    return (cost + math.fsum(penalties)) / count


def garment_accuracy(pred: SewingPattern, gt: SewingPattern) -> int:
    pred, gt = canonicalize(pred), canonicalize(gt)
    if len(pred.panels) != len(gt.panels):
        return 0
    if not gt.panels:
        return int(not pred.stitches and not gt.stitches)
    asg = match_panels(pred, gt)
    mapping = asg.mapping()
    for i, j in asg.pairs:
        if len(pred.panels[i].edges) != len(gt.panels[j].edges):
            return 0
    pidx, gidx = pred.panel_index(), gt.panel_index()

    def stitch_set(p, index, relabel):
        out = set()
        for s in p.stitches:
            a = (relabel(index[s.side_a[0]]), s.side_a[1])
            b = (relabel(index[s.side_b[0]]), s.side_b[1])
            out.add(frozenset((a, b)))
        return out, len(p.stitches)

    ps, pn = stitch_set(pred, pidx, mapping.__getitem__)
    gs, gn = stitch_set(gt, gidx, lambda j: j)
    return int(ps == gs and pn == gn)


# ---------------------------------------------------------------------------
# attribute proxy for text alignment


@dataclass(frozen=True)
class AttributeRecord:
    garment_class: str
    length_bucket: str
    sleeves: Optional[str] = None       # tee only
    flare_bucket: Optional[str] = None  # skirt only
    hem_curved: Optional[bool] = None   # skirt only

    def constraints(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def _bucket(value: float, cuts: tuple[float, float], names: tuple[str, str, str]) -> str:
    if value < cuts[0]:
        return names[0]
    if value < cuts[1]:
        return names[1]
    return names[2]


def _y_extent(panel: Panel) -> float:
    ys = flatten_panel(panel)[:, 1]
    return float(ys.max() - ys.min())


def _chord(panel: Panel, i: int) -> float:
    (x0, y0), (x1, y1) = panel.edges[i].start, panel.edge_end(i)
    return math.hypot(x1 - x0, y1 - y0)


def measure_attributes(p: SewingPattern) -> AttributeRecord:
    """Classify a pattern by its panel/edge signature and bucket its geometry.

    Raises:
        UnclassifiableError: signature matches neither template family, or the
            geometry is degenerate.
    """
    counts = sorted(len(q.edges) for q in p.panels)
    if counts == [4, 4]:
        ratios = []
        for q in p.panels:
            waist = _chord(q, 2)
            if waist < 1e-6:
                raise UnclassifiableError("degenerate waist edge")
            ratios.append(_chord(q, 0) / waist)
        length = max(_y_extent(q) for q in p.panels)
        return AttributeRecord(
            garment_class="skirt",
            length_bucket=_bucket(length, SKIRT_LENGTH_CUTS, ("short", "mid", "long")),
            flare_bucket=_bucket(float(np.mean(ratios)), FLARE_CUTS,
                                 ("straight", "a-line", "flared")),
            hem_curved=any(q.edges[0].control is not None for q in p.panels),
        )
    if counts in ([6, 6], [4, 4, 6, 6]):
        body = [q for q in p.panels if len(q.edges) == 6]
        sleeves = [q for q in p.panels if len(q.edges) == 4]
        length = max(_y_extent(q) for q in body)
        if length < 1e-6:
            raise UnclassifiableError("degenerate body panel")
        if sleeves:
            sl = max(_y_extent(q) for q in sleeves)
            sleeve = "short" if sl < SLEEVE_CUT else "long"
        else:
            sleeve = "none"
        return AttributeRecord(
            garment_class="tee",
            length_bucket=_bucket(length, TEE_LENGTH_CUTS, ("short", "mid", "long")),
            sleeves=sleeve,
        )
    raise UnclassifiableError(f"panel/edge signature {counts} fits no template")


def text_alignment(pred: Optional[SewingPattern], prompt) -> float:
    """Fraction of the prompt's constraints the prediction satisfies.

    ``prompt`` is a PromptRecord or a plain mapping of constraints. A class
    mismatch or an unclassifiable (or missing) prediction scores 0.
    """
    constraints: Mapping = getattr(prompt, "constraints", prompt)
    if not constraints:
        warnings.warn("prompt specifies no constraint", EmptyConstraintWarning, stacklevel=2)
        return 1.0
    if pred is None:
        return 0.0
    try:
        attrs = measure_attributes(pred).constraints()
    except UnclassifiableError:
        return 0.0
    if "garment_class" in constraints and attrs["garment_class"] != constraints["garment_class"]:
        return 0.0
    hits = sum(1 for k, v in constraints.items() if attrs.get(k) == v)
    return hits / len(constraints)
