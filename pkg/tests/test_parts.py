from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pedalign.errors import InvalidParameterError
from pedalign.geometry import Box, intersection
from pedalign.parts import PART_ORDER, MergeParams, PartDetection, PartKind, detect_parts, merge, part_boxes, penalty
from pedalign.synthetic import AnalyticBackend, BackendParams, PlantedPedestrian

real = st.floats(-1e3, 1e3, allow_nan=False)


def parts(scores, positions=None):
    positions = positions or [(0.0, 0.0)] * 3
    return [PartDetection(k, s, p) for k, s, p in zip(PART_ORDER, scores, positions)]


def test_part_boxes_example():
    pb = part_boxes(Box(10, 30, 30, 90))
    assert pb[PartKind.HEAD] == Box(10, 30, 30, 30)
    assert pb[PartKind.TORSO] == Box(10, 60, 30, 30)
    assert pb[PartKind.LEGS] == Box(10, 90, 30, 30)
    assert set(pb) == {PartKind.HEAD, PartKind.TORSO, PartKind.LEGS}


def test_part_heights_sum_exactly():
    pb = part_boxes(Box(0, 0, 10, 91))
    assert sum(b.h for b in pb.values()) == 91
    assert pb[PartKind.HEAD].h == pytest.approx(91 / 3)


@given(real, real, st.floats(0.1, 500), st.floats(0.1, 500))
def test_part_boxes_tile(x, y, w, h):
    vis = Box(x, y, w, h)
    pb = list(part_boxes(vis).values())
    assert sum(b.area for b in pb) == pytest.approx(vis.area, rel=1e-12)
    for i in range(3):
        assert pb[i].x == vis.x and pb[i].w == vis.w
        for j in range(i + 1, 3):
            assert intersection(pb[i], pb[j]) <= 1e-9 * vis.area
    assert pb[0].y == vis.y
    assert pb[2].y2 == pytest.approx(vis.y2, abs=1e-9 * max(1, abs(vis.y2)))


def test_penalty_examples():
    assert penalty((5, 5), (5, 5), 3.0, -2.0) == 0
    assert penalty((13, 24), (10, 20), 1, 0) == 7
    assert penalty((13, 24), (10, 20), 0, 1) == -7


@given(real, real, real, real, real, real)
def test_penalty_depends_on_absolute_offsets(px, py, ax, ay, a, b):
    p = penalty((px, py), (ax, ay), a, b)
    assert p == penalty((ax, ay), (px, py), a, b)
    assert penalty((px, py), (ax, ay), 0, 0) == 0


ints = st.integers(-10**6, 10**6)


@given(ints, ints, ints, ints, real, real)
def test_penalty_reflection(px, py, ax, ay, a, b):
    # integer coordinates keep the reflected point exact
    p = penalty((px, py), (ax, ay), a, b)
    assert p == penalty((2 * ax - px, py), (ax, ay), a, b)
    assert p == penalty((px, 2 * ay - py), (ax, ay), a, b)


def test_merge_examples():
    assert merge(0.42, parts([0, 0, 0]), (0, 0), MergeParams(a=-0.3, b=0.2)) == 0.42
    assert merge(0.5, parts([0.6, 0.3, 0.3]), (0, 0), MergeParams(a=0.0, b=0.0)) == 0.9
    assert merge(0.5, parts([0.6, 0.3, 0.3]), (0, 0)) == 0.9
    # a single displaced part at (3, 4): penalty -0.7 weighted by 1/3
    got = merge(0.0, parts([0, 0, 0], [(3, 4), (0, 0), (0, 0)]), (0, 0), MergeParams(a=-0.1))
    assert got == pytest.approx(-0.7 / 3, abs=1e-15)


def test_merge_normalized_penalty():
    mp = MergeParams(w=(1, 0, 0), a=1.0, normalize=True)
    got = merge(0.0, parts([0, 0, 0], [(20, 40), (0, 0), (0, 0)]), (0, 0), mp, scale=(10, 20))
    assert got == 4.0


def test_weight_validation():
    with pytest.raises(InvalidParameterError):
        MergeParams(w=(0.5, 0.5, 0.5))
    with pytest.raises(InvalidParameterError):
        MergeParams(w=(0.5, 0.5))
    with pytest.raises(InvalidParameterError):
        MergeParams(w=(float("nan"), 0.5, 0.5))
    assert MergeParams(w=("1/2", "1/4", "0.25")).w == (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4))
    MergeParams(w=(0.2, 0.3, 0.5 + 5e-10))
    with pytest.raises(InvalidParameterError):
        merge(0.0, parts([0, 0]), (0, 0))


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.integers(0, 2), st.floats(-1, 1))
def test_merge_linear_in_each_part_score(scores, k, eps):
    mp = MergeParams(w=(0.2, 0.3, 0.5), a=-0.1, b=0.01)
    pos = [(1.0, 2.0), (-3.0, 0.5), (4.0, -1.0)]
    base = merge(0.3, parts(scores, pos), (0.5, 0.5), mp)
    bumped = list(scores)
    bumped[k] += eps
    moved = merge(0.3, parts(bumped, pos), (0.5, 0.5), mp)
    assert moved - base == pytest.approx(mp.w[k] * (bumped[k] - scores[k]), abs=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3),
       st.lists(st.floats(0.01, 1), min_size=3, max_size=3), st.floats(0, 1))
def test_shifting_weight_to_best_part_never_decreases(scores, raw_w, frac):
    total = sum(raw_w)
    w = [v / total for v in raw_w]
    w[2] = 1.0 - w[0] - w[1]
    pos = [(2.0, 1.0), (0.0, 3.0), (1.0, 1.0)]
    mp = MergeParams(w=tuple(w), a=-0.1, b=0.0)
    before = merge(0.0, parts(scores, pos), (0, 0), mp)
    gains = [s + penalty(p, (0, 0), -0.1, 0.0) for s, p in zip(scores, pos)]
    best = int(np.argmax(gains))
    w2 = [v * (1 - frac) for v in w]
    w2[best] += 1.0 - sum(w2)
    after = merge(0.0, parts(scores, pos), (0, 0), MergeParams(w=tuple(w2), a=-0.1, b=0.0))
    assert after >= before - 1e-12


def test_detect_parts_on_planted_pedestrian():
    vis = Box(180.0, 100.0, 41.0, 100.0)
    pb = part_boxes(vis)
    planted = PlantedPedestrian(vis.center, vis.h, {k.value: b.center for k, b in pb.items()})
    be = AnalyticBackend({"i": [planted]}, BackendParams())
    found = detect_parts(be, vis, "i")
    assert [d.kind for d in found] == list(PART_ORDER)
    for d in found:
        cx, cy = pb[d.kind].center
        assert abs(d.position[0] - cx) <= 4.0 and abs(d.position[1] - cy) <= 4.0
        assert 0.0 < d.score <= 1.0


def test_merge_per_part_references():
    # each part sits exactly on its own reference: no penalty at all
    pos = [(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)]
    ps = parts([0.3, 0.6, 0.9], pos)
    params = MergeParams(a=-1.0, b=0.0)
    assert merge(0.5, ps, (0.0, 0.0), params, references=pos) == 0.5 + 0.6
    shared = merge(0.5, ps, (0.0, 0.0), params)
    assert shared < 0.5 + 0.6


def test_merge_references_length_checked():
    with pytest.raises(InvalidParameterError):
        merge(0.5, parts([0.1, 0.2, 0.3]), (0, 0), MergeParams(), references=[(0, 0)])
