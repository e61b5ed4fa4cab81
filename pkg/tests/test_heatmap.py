import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pedalign.errors import DimensionError, InvalidParameterError
from pedalign.geometry import Box, MapFrame
from pedalign.heatmap import (ConfidenceMap, FeatureGrid, ScorerOutput, cam, cam_total, input_frame, interlace,
                              shift_and_stitch, stitch_outputs, upsample)
from pedalign.synthetic import AnalyticBackend, BackendParams, PlantedPedestrian

FRAME = MapFrame(16, 16, 32, 1, 1)
finite = st.floats(-10, 10, allow_nan=False)


def dense_oracle(backend, image_id, region, f, detector="root"):
    """Sample the backend's closed-form field directly on the stride-s/f grid."""
    rows, cols = 5 * f, 3 * f
    step = 32 / f
    out = np.empty((rows, cols))
    for R in range(rows):
        for C in range(cols):
            x = region.x + (16 + C * step) * region.w / 96
            y = region.y + (16 + R * step) * region.h / 160
            out[R, C] = backend.field(image_id, detector, x, y)
    return out


class TableBackend:
    """Returns a distinct constant-free map per shift so stitching can be audited."""
    stride = 32
    serial = False

    def __init__(self, rows=5, cols=3):
        self.rows, self.cols = rows, cols
        self.calls = []
        self.lock = threading.Lock()

    def evaluate(self, region, image_id, offset=(0.0, 0.0), detector="root"):
        with self.lock:
            self.calls.append(offset)
        base = 1000 * offset[1] + offset[0]
        vals = base + np.arange(self.rows * self.cols, dtype=float).reshape(self.rows, self.cols) * 1e5
        fr = input_frame(region, offset)
        feats = np.stack([vals, -vals], axis=-1)
        return ScorerOutput(ConfidenceMap(vals, fr), FeatureGrid(feats, fr), np.array([1.0, 0.5]), 0.0)


def _backend(noise=0.0):
    planted = {"a": [PlantedPedestrian((130.0, 210.0), 100.0,
                                       {"head": (130.0, 180.0), "torso": (130.0, 210.0), "legs": (130.0, 240.0)}),
                     PlantedPedestrian((170.0, 160.0), 80.0,
                                       {"head": (170.0, 140.0), "torso": (170.0, 160.0), "legs": (170.0, 180.0)})]}
    return AnalyticBackend(planted, BackendParams(bump_sigma=9.0, noise=noise, seed=3))


def test_cam_examples():
    g = FeatureGrid(np.array([[[2.0, 1.0]]]), FRAME)
    assert cam(g, [0.5, 2]).values[0, 0] == 3.0
    rng = np.random.default_rng(0)
    f = rng.normal(size=(4, 3, 1))
    g2 = FeatureGrid(np.concatenate([f, f], axis=-1), FRAME)
    assert np.all(cam(g2, [1, -1]).values == 0.0)
    assert np.all(cam(FeatureGrid(rng.normal(size=(4, 3, 5)), FRAME), np.zeros(5)).values == 0.0)
    assert cam(g, [0.5, 2]).frame == FRAME


def test_cam_channel_mismatch():
    with pytest.raises(DimensionError):
        cam(FeatureGrid(np.zeros((2, 2, 3)), FRAME), [1, 2])


@given(arrays(float, (4, 3, 3), elements=finite), arrays(float, 3, elements=finite),
       arrays(float, 3, elements=finite), finite, finite)
def test_cam_linear_in_weights(f, w1, w2, a, b):
    g = FeatureGrid(f, FRAME)
    lhs = cam(g, a * w1 + b * w2).values
    rhs = a * cam(g, w1).values + b * cam(g, w2).values
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-9)
    assert cam_total(g, w1) == pytest.approx(cam(g, w1).values.sum(), abs=1e-9)


def test_map_validation():
    with pytest.raises(InvalidParameterError):
        ConfidenceMap(np.array([[np.nan]]), FRAME)
    with pytest.raises(DimensionError):
        ConfidenceMap(np.zeros(3), FRAME)


def test_interlace_f2_example():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    maps = {(0, 0): np.array([[a]]), (1, 0): np.array([[b]]), (0, 1): np.array([[c]]), (1, 1): np.array([[d]])}
    assert interlace(maps, 2).tolist() == [[a, b], [c, d]]


def test_stitch_f1_is_identity():
    be = _backend()
    region = Box(100, 150, 60, 120)
    out = be.evaluate(region, "a")
    st1 = shift_and_stitch(be, region, "a", 1)
    assert np.array_equal(st1.values, out.fcn.values)
    assert st1.frame == out.fcn.frame


@pytest.mark.parametrize("f", [2, 4])
def test_stitch_is_a_permutation(f):
    be = TableBackend()
    out = shift_and_stitch(be, Box(0, 0, 96, 160), "x", f, max_workers=4)
    assert out.values.shape == (5 * f, 3 * f)
    constituent = []
    step = 32 // f
    for dy in range(f):
        for dx in range(f):
            constituent.extend(be.evaluate(Box(0, 0, 96, 160), "x", (dx * step, dy * step)).fcn.values.ravel())
    assert sorted(out.values.ravel()) == sorted(constituent)
    assert out.frame.stride == 32 / f


@pytest.mark.parametrize("f", [1, 2, 4, 8])
def test_stitch_equals_dense_oracle(f):
    be = _backend(noise=0.3)
    region = Box(92.5, 141.0, 75.0, 150.0)
    got = shift_and_stitch(be, region, "a", f)
    assert np.max(np.abs(got.values - dense_oracle(be, "a", region, f))) <= 1e-9


def test_stitch_requires_divisor():
    with pytest.raises(InvalidParameterError):
        shift_and_stitch(_backend(), Box(0, 0, 10, 10), "a", 3)
    with pytest.raises(InvalidParameterError):
        shift_and_stitch(_backend(), Box(0, 0, 10, 10), "a", 0)


def test_threaded_stitch_matches_serial():
    be = _backend(noise=0.2)
    region = Box(90, 140, 70, 140)
    a = stitch_outputs(be, region, "a", 4, max_workers=1)
    b = stitch_outputs(be, region, "a", 4, max_workers=8)
    assert a.fcn == b.fcn and a.features == b.features


def test_upsample_examples():
    m = ConfidenceMap(np.array([[0.0], [1.0]]), FRAME)
    assert upsample(m, 5, 1).values[:, 0].tolist() == [0, 0.25, 0.5, 0.75, 1]
    rng = np.random.default_rng(1)
    v = rng.normal(size=(5, 3))
    same = upsample(ConfidenceMap(v, FRAME), 5, 3)
    assert np.array_equal(same.values, v) and same.frame == FRAME
    const = upsample(ConfidenceMap(np.full((5, 3), 0.7), FRAME), 17, 11)
    assert np.all(const.values == 0.7)
    with pytest.raises(InvalidParameterError):
        upsample(m, 1, 1)


def test_upsample_keeps_pixel_extent():
    fr = MapFrame(40, 20, 8, 0.5, 0.8)
    m = ConfidenceMap(np.zeros((5, 3)), fr)
    up = upsample(m, 13, 9)
    from pedalign.geometry import cell_to_pixel
    assert cell_to_pixel(up.frame, 0, 0) == pytest.approx(cell_to_pixel(fr, 0, 0))
    assert cell_to_pixel(up.frame, 12, 8) == pytest.approx(cell_to_pixel(fr, 4, 2))


@given(arrays(float, (4, 3), elements=finite), st.integers(4, 15), st.integers(3, 12))
def test_upsample_within_bounds(v, r, c):
    up = upsample(ConfidenceMap(v, FRAME), r, c).values
    assert up.min() >= v.min() and up.max() <= v.max()
    assert up.shape == (r, c)
