import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_nms, raster_iou
from pedalign.errors import EmptyRegionError, InvalidParameterError
from pedalign.geometry import (Box, MapFrame, ScoredBox, cell_to_pixel, clip_box, expand_box, iou,
                               iou_matrix, nms, nms_indices, pixel_to_cell)

coord = st.floats(-1e3, 1e3, allow_nan=False)
size = st.floats(1e-2, 1e3, allow_nan=False)
boxes = st.builds(Box, coord, coord, size, size)


def test_iou_examples():
    a = Box(0, 0, 10, 10)
    assert iou(a, Box(0, 0, 10, 10)) == 1.0
    assert iou(a, Box(20, 20, 5, 5)) == 0.0
    assert iou(a, Box(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-15)


def test_degenerate_boxes_rejected():
    for w, h in ((0, 1), (1, 0), (-1, 2)):
        with pytest.raises(InvalidParameterError):
            Box(0, 0, w, h)
    with pytest.raises(InvalidParameterError):
        Box(float("nan"), 0, 1, 1)


def test_iou_matches_raster_oracle(rng):
    for _ in range(500):
        a = tuple(int(v) for v in np.r_[rng.integers(0, 30, 2), rng.integers(1, 20, 2)])
        b = tuple(int(v) for v in np.r_[rng.integers(0, 30, 2), rng.integers(1, 20, 2)])
        assert abs(iou(Box(*a), Box(*b)) - raster_iou(a, b)) <= 1e-9


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == 1.0


def test_iou_matrix_agrees(rng):
    a = [Box(*rng.uniform(0, 50, 2), *rng.uniform(1, 20, 2)) for _ in range(7)]
    b = [Box(*rng.uniform(0, 50, 2), *rng.uniform(1, 20, 2)) for _ in range(5)]
    m = iou_matrix(a, b)
    for i in range(7):
        for j in range(5):
            assert m[i, j] == pytest.approx(iou(a[i], b[j]), abs=1e-12)


def test_nms_examples():
    a = Box(0, 0, 10, 10)
    kept = nms([ScoredBox(a, 0.9), ScoredBox(a, 0.8)], 0.5)
    assert [k.score for k in kept] == [0.9]
    kept = nms([ScoredBox(a, 0.9), ScoredBox(Box(50, 50, 5, 5), 0.8)], 0.5)
    assert len(kept) == 2


def test_nms_chain():
    # Jaccard distance is a metric, so A-B and B-C at 0.6 force iou(A, C) >= 0.2;
    # the closest realizable chain has A-C at 1/3, still below the threshold
    A, B, C = Box(0, 0, 10, 10), Box(2.5, 0, 10, 10), Box(5, 0, 10, 10)
    assert iou(A, B) == pytest.approx(0.6) and iou(B, C) == pytest.approx(0.6)
    assert iou(A, C) == pytest.approx(1 / 3)
    kept = nms_indices([ScoredBox(A, 0.9), ScoredBox(B, 0.8), ScoredBox(C, 0.7)], 0.5)
    assert kept == [0, 2]


def test_nms_ties_break_by_index():
    a = Box(0, 0, 10, 10)
    assert nms_indices([ScoredBox(a, 0.5), ScoredBox(a, 0.5)], 0.5) == [0]
    assert nms_indices([ScoredBox(a, 0.5), ScoredBox(Box(40, 0, 5, 5), 0.5)], 0.5) == [0, 1]


def test_nms_rejects_bad_threshold():
    with pytest.raises(InvalidParameterError):
        nms([ScoredBox(Box(0, 0, 1, 1), 1.0)], 0.0)


def _random_set(rng, n):
    xy = rng.integers(0, 40, (n, 2))
    wh = rng.integers(4, 25, (n, 2))
    bx = [Box(*map(float, np.r_[p, q])) for p, q in zip(xy, wh)]
    # coarse scores so ties occur
    sc = [float(v) for v in rng.integers(0, 6, n) / 5]
    return bx, sc


def test_nms_matches_brute_force(rng):
    for _ in range(300):
        n = int(rng.integers(0, 21))
        bx, sc = _random_set(rng, n)
        thr = float(rng.choice([0.3, 0.5, 0.7]))
        got = nms_indices([ScoredBox(b, s) for b, s in zip(bx, sc)], thr)
        assert got == brute_nms([b.as_list() for b in bx], sc, thr)


def test_nms_invariants(rng):
    for _ in range(100):
        bx, sc = _random_set(rng, 15)
        cands = [ScoredBox(b, s) for b, s in zip(bx, sc)]
        kept = nms(cands, 0.5)
        assert all(k in cands for k in kept)
        assert [k.score for k in kept] == sorted((k.score for k in kept), reverse=True)
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                assert iou(kept[i].box, kept[j].box) <= 0.5
        assert nms(kept, 0.5) == kept


def test_cell_to_pixel_examples():
    fr = MapFrame(16, 16, 32, 1, 1)
    assert cell_to_pixel(fr, 0, 0) == (16, 16)
    assert cell_to_pixel(fr, 2, 1) == (48, 80)
    x, _ = cell_to_pixel(MapFrame(16, 16, 32, 0.6, 1), 0, 1)
    assert x == pytest.approx(80.0, abs=1e-12)


@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(0.5, 64), st.floats(0.1, 4), st.floats(0.1, 4))
def test_cell_round_trip(ox, oy, stride, sx, sy):
    fr = MapFrame(ox, oy, stride, sx, sy)
    for r in range(6):
        for c in range(4):
            x, y = cell_to_pixel(fr, r, c)
            assert pixel_to_cell(fr, x, y) == (r, c)


def test_mapframe_validation():
    with pytest.raises(InvalidParameterError):
        MapFrame(0, 0, 0, 1, 1)
    with pytest.raises(InvalidParameterError):
        MapFrame(0, 0, 1, -1, 1)


def test_expand_examples():
    assert expand_box(Box(100, 100, 48, 80), 0.25) == Box(94, 90, 60, 100)
    b = Box(3.3, 4.4, 5.5, 6.6)
    assert expand_box(b, 0) == b
    assert expand_box(Box(0, 0, 4, 4), 0.25) == Box(-0.5, -0.5, 5, 5)
    with pytest.raises(InvalidParameterError):
        expand_box(b, -0.1)


@given(boxes, st.floats(0, 3))
def test_expand_preserves_center_and_scales_area(b, ratio):
    e = expand_box(b, ratio)
    assert abs(e.cx - b.cx) <= 1e-9 * max(1.0, abs(b.cx))
    assert abs(e.cy - b.cy) <= 1e-9 * max(1.0, abs(b.cy))
    assert e.area == pytest.approx(b.area * (1 + ratio) ** 2, rel=1e-12)


def test_clip_box():
    assert clip_box(Box(-5, -5, 20, 20), 10, 10) == Box(0, 0, 10, 10)
    with pytest.raises(EmptyRegionError):
        clip_box(Box(20, 20, 5, 5), 10, 10)
