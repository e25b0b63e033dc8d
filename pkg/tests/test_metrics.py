"""Assignment solver against brute force; Vertex L2, accuracy and attribute proxy."""

import itertools
import math
import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlg.assignment import assignment_oracle, assignment_solve
from vlg.datagen.garments import ParamRecord, build_pattern, make_rng, sample_garment
from vlg.errors import (DimError, EmptyConstraintWarning, EmptyPatternWarning, SizeError,
                        UnclassifiableError)
from vlg.metrics import (garment_accuracy, measure_attributes, panel_cost, text_alignment,
                         vertex_l2)
from vlg.pattern import Edge, Panel, SewingPattern, Stitch

from helpers import random_pattern


def skirt(w=20.0, h=40.0, L=60.0, c=0.0):
    return build_pattern(ParamRecord("skirt", waist=w, hem=h, length=L, hem_offset=c))


def tee(bl=50.0, sleeves=None):
    kw = dict(sleeve_length=sleeves, sleeve_width=12.0) if sleeves else {}
    return build_pattern(ParamRecord("tee", body_width=25.0, body_length=bl, neck_depth=6.0, **kw))


def shift(panel, dx, dy):
    return Panel(panel.name, tuple(Edge((e.start[0] + dx, e.start[1] + dy),
                                        None if e.control is None else (e.control[0] + dx, e.control[1] + dy))
                                   for e in panel.edges), panel.rotation, panel.translation)


def square(name="sq"):
    return Panel(name, tuple(Edge(p) for p in [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)]))


# -------------------------------------------------------------- assignment

@pytest.mark.parametrize("cost,pairs,total", [
    ([[0, 1], [1, 0]], [(0, 0), (1, 1)], 0.0),
    ([[4, 1], [2, 3]], [(0, 1), (1, 0)], 3.0),
    ([[5]], [(0, 0)], 5.0),
])
def test_solver_examples(cost, pairs, total):
    for fn in (assignment_solve, assignment_oracle):
        r = fn(cost)
        assert r.pairs == pairs and r.total_cost == total


def test_rectangular_matching_size():
    r = assignment_solve([[1, 2], [3, 4], [0, 9]])
    assert len(r.pairs) == 2 and len(r.unmatched_pred) == 1 and not r.unmatched_gt
    assert r.total_cost == assignment_oracle([[1, 2], [3, 4], [0, 9]]).total_cost


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.booleans())
def test_solver_matches_oracle(n, m, seed, integral):
    rng = np.random.default_rng(seed)
    c = rng.integers(0, 4, size=(n, m)) if integral else rng.uniform(0, 100, size=(n, m))
    a, b = assignment_solve(c), assignment_oracle(c)
    assert len(a.pairs) == min(n, m)
    assert len({j for _, j in a.pairs}) == len(a.pairs)
    assert abs(a.total_cost - b.total_cost) <= 1e-9


def test_solver_errors():
    with pytest.raises(SizeError):
        assignment_solve(np.zeros((65, 2)))
    with pytest.raises(SizeError):
        assignment_oracle(np.zeros((8, 8)))
    with pytest.raises(DimError):
        assignment_solve([1.0, 2.0])
    with pytest.raises(DimError):
        assignment_solve(np.zeros((0, 3)))


def test_solver_handles_64():
    c = np.random.default_rng(0).uniform(size=(64, 64))
    t = time.perf_counter()
    r = assignment_solve(c)
    assert time.perf_counter() - t < 5
    assert sorted(j for _, j in r.pairs) == list(range(64))


# ----------------------------------------------------------------- metrics

def test_panel_cost_anchors():
    assert panel_cost(square(), square()) == 0.0
    assert panel_cost(square(), shift(square(), 3, 4)) == pytest.approx(5.0, abs=1e-12)
    rotated = Panel("sq", square().edges[1:] + square().edges[:1])
    assert panel_cost(square(), rotated) > 1.0


def test_vertex_l2_shift_all_panels():
    gt = skirt()
    pred = SewingPattern(tuple(shift(q, 3, 4) for q in gt.panels), gt.stitches)
    assert vertex_l2(gt, gt) == 0.0
    assert vertex_l2(pred, gt) == pytest.approx(5.0, abs=1e-9)


def test_vertex_l2_shift_one_panel():
    gt = skirt()
    pred = SewingPattern((gt.panels[0], shift(gt.panels[1], 3, 4)), gt.stitches)
    assert vertex_l2(pred, gt) == pytest.approx(2.5, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vertex_l2_two_panels_brute_force(seed):
    rng = np.random.default_rng(seed)
    a = random_pattern(rng, max_panels=2)
    b = random_pattern(rng, max_panels=2)
    if len(a.panels) != len(b.panels):
        return
    pa, pb = sorted(a.panels, key=lambda q: q.name), sorted(b.panels, key=lambda q: q.name)
    best = min(sum(panel_cost(pa[i], pb[j]) for i, j in enumerate(perm))
               for perm in itertools.permutations(range(len(pb))))
    assert vertex_l2(a, b) == pytest.approx(best / len(pa), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vertex_l2_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    a, b = random_pattern(rng), random_pattern(rng)
    assert vertex_l2(a, b) == pytest.approx(vertex_l2(b, a), abs=1e-9)
    assert vertex_l2(a, b) >= 0


def test_vertex_l2_unmatched_penalty_and_empty():
    gt = skirt()
    one = SewingPattern(gt.panels[:1])
    assert vertex_l2(one, gt) > 0
    with pytest.warns(EmptyPatternWarning):
        assert vertex_l2(SewingPattern(), SewingPattern()) == 0.0


def test_accuracy_topology():
    gt = tee(sleeves=30.0)
    assert garment_accuracy(gt, gt) == 1
    names = {q.name for q in gt.panels[:3]}
    dropped = SewingPattern(gt.panels[:3], tuple(s for s in gt.stitches
                                                 if s.side_a[0] in names and s.side_b[0] in names))
    assert garment_accuracy(dropped, gt) == 0
    distorted = SewingPattern(tuple(shift(q, 1.5, -2.0) for q in gt.panels), gt.stitches)
    assert garment_accuracy(distorted, gt) == 1
    assert vertex_l2(distorted, gt) > 0
    missing = SewingPattern(gt.panels, gt.stitches[1:])
    assert garment_accuracy(missing, gt) == 0


def test_accuracy_ignores_panel_names():
    gt = skirt()
    renamed = SewingPattern(tuple(Panel(f"panel_0{k}", q.edges, q.rotation, q.translation)
                                  for k, q in enumerate(gt.panels)),
                            (Stitch(("panel_00", 1), ("panel_01", 1)), Stitch(("panel_00", 3), ("panel_01", 3))))
    assert garment_accuracy(renamed, gt) == 1


def test_accuracy_on_sampled_garments():
    rng = make_rng(3)
    for fam in ("skirt", "tee") * 10:
        p, _ = sample_garment(fam, rng)
        assert garment_accuracy(p, p) == 1 and vertex_l2(p, p) == 0.0


# -------------------------------------------------------------- attributes

def test_skirt_attributes():
    r = measure_attributes(skirt())
    assert r.constraints() == {"garment_class": "skirt", "length_bucket": "mid",
                               "flare_bucket": "flared", "hem_curved": False}
    assert measure_attributes(skirt(c=4.0)).hem_curved is True
    assert measure_attributes(skirt(h=20.0)).flare_bucket == "straight"


def test_tee_attributes():
    assert measure_attributes(tee()).constraints() == {"garment_class": "tee", "length_bucket": "short",
                                                       "sleeves": "none"}
    assert measure_attributes(tee(75.0, 15.0)).sleeves == "short"
    assert measure_attributes(tee(75.0, 40.0)).constraints()["length_bucket"] == "long"


def test_unclassifiable():
    with pytest.raises(UnclassifiableError):
        measure_attributes(SewingPattern(tuple(square(f"p{k}") for k in range(7))))


def test_length_bucket_monotone():
    order = {"short": 0, "mid": 1, "long": 2}
    seen = [order[measure_attributes(skirt(L=L)).length_bucket] for L in np.linspace(30, 90, 40)]
    assert seen == sorted(seen) and set(seen) == {0, 1, 2}


def test_text_alignment_examples():
    long_skirt = skirt(w=20, h=22, L=85)
    assert text_alignment(long_skirt, {"garment_class": "skirt", "length_bucket": "long"}) == 1.0
    assert text_alignment(tee(), {"garment_class": "skirt", "length_bucket": "long"}) == 0.0
    three = {"garment_class": "skirt", "length_bucket": "long", "flare_bucket": "flared"}
    assert text_alignment(long_skirt, three) == pytest.approx(2 / 3)
    assert text_alignment(None, three) == 0.0
    assert text_alignment(SewingPattern((square(),)), three) == 0.0
    with pytest.warns(EmptyConstraintWarning):
        assert text_alignment(long_skirt, {}) == 1.0
