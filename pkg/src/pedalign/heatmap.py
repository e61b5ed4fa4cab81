"""Confidence maps: class activation maps, shift-and-stitch and upsampling.

Raw coarse maps come from a scorer backend. A backend sees a region of the
image resized to ``INPUT_H x INPUT_W`` and returns a ``5 x 3`` FCN map at
stride 32 in that resized frame, plus a feature grid on the same cells and
the class weights needed to turn the features into a CAM.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import DimensionError, InvalidParameterError
from .geometry import Box, MapFrame

INPUT_H = 160
INPUT_W = 96
STRIDE = 32
MAP_ROWS = INPUT_H // STRIDE
MAP_COLS = INPUT_W // STRIDE


def _frozen_array(values, ndim: int, what: str) -> np.ndarray:
    v = np.array(values, dtype=float)
    if v.ndim != ndim or v.size == 0:
        raise DimensionError(f"{what} must be a non-empty {ndim}-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError(f"{what} values must be finite")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class ConfidenceMap:
    values: np.ndarray  # (rows, cols)
    frame: MapFrame

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 2, "confidence map"))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ConfidenceMap):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    values: np.ndarray  # (rows, cols, channels)
    frame: MapFrame

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 3, "feature grid"))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other):
        if not isinstance(other, FeatureGrid):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class ScorerOutput:
    fcn: ConfidenceMap
    features: FeatureGrid
    cam_weights: np.ndarray
    score: float


@runtime_checkable
class ScorerBackend(Protocol):
    """What the alignment pipeline needs from a trained root/part network.

    ``evaluate`` must be deterministic. ``offset`` is a shift of the input
    window in resized-frame pixels (rightward, downward). ``detector`` is
    ``"root"`` or a part name. Backends that are not safe to call from
    several threads set ``serial = True``.
    """

    stride: int
    serial: bool

    def evaluate(self, region: Box, image_id: str, offset: tuple[float, float] = (0.0, 0.0),
                 detector: str = "root") -> ScorerOutput: ...


def input_frame(region: Box, offset: tuple[float, float] = (0.0, 0.0), stride: float = STRIDE) -> MapFrame:
    """Frame of the coarse map for ``region`` resized to the network input.

    Frames are anchored in absolute image pixels: the origin includes the
    region's position, so ``cell_to_pixel`` returns image coordinates.
    """
    sx = INPUT_W / region.w
    sy = INPUT_H / region.h
    return MapFrame(region.x * sx + stride / 2.0 + offset[0],
                    region.y * sy + stride / 2.0 + offset[1],
                    stride, sx, sy)


def cam(features: FeatureGrid, weights: Sequence[float]) -> ConfidenceMap:
    """Per-cell weighted channel sum ``sum_k w_k * f_k(x, y)``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] != features.channels:
        raise DimensionError(f"{w.shape[0] if w.ndim == 1 else w.shape} weights for {features.channels} channels")
    return ConfidenceMap(features.values @ w, features.frame)


def cam_total(features: FeatureGrid, weights: Sequence[float]) -> float:
    """Scalar CAM response: the weighted sum over every cell and channel."""
    return float(cam(features, weights).values.sum())


def interlace(maps: dict[tuple[int, int], np.ndarray], f: int) -> np.ndarray:
    """Interlace ``f*f`` equally shaped arrays keyed by shift ``(dx, dy)``.

    Output cell ``(i*f + dy, j*f + dx)`` takes cell ``(i, j)`` of map ``(dx, dy)``.
    """
    base = maps[(0, 0)]
    shape = (base.shape[0] * f, base.shape[1] * f) + base.shape[2:]
    out = np.empty(shape, dtype=float)
    for (dx, dy), m in maps.items():
        if m.shape != base.shape:
            raise DimensionError(f"shift ({dx}, {dy}) map has shape {m.shape}, expected {base.shape}")
        out[dy::f, dx::f] = m
    return out


@dataclass(frozen=True, eq=False)
class StitchedOutput:
    fcn: ConfidenceMap
    features: FeatureGrid
    cam_weights: np.ndarray

    def cam(self) -> ConfidenceMap:
        return cam(self.features, self.cam_weights)


def stitch_outputs(backend: ScorerBackend, region: Box, image_id: str, f: int,
                   detector: str = "root", max_workers: int = 1) -> StitchedOutput:
    """Evaluate ``backend`` at ``f*f`` sub-stride shifts and interlace both maps."""
    s = getattr(backend, "stride", STRIDE)
    if not isinstance(f, (int, np.integer)) or f < 1:
        raise InvalidParameterError(f"shift factor f must be a positive integer, got {f!r}")
    if s % f != 0:
        raise InvalidParameterError(f"shift factor f={f} does not divide the stride {s}")
    step = s // f
    shifts = [(dx, dy) for dy in range(f) for dx in range(f)]

    def run(shift):
        dx, dy = shift
        return backend.evaluate(region, image_id, (float(dx * step), float(dy * step)), detector)

    if max_workers > 1 and not getattr(backend, "serial", True) and len(shifts) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outputs = list(pool.map(run, shifts))
    else:
        outputs = [run(sh) for sh in shifts]
    by_shift = dict(zip(shifts, outputs))

    base = by_shift[(0, 0)]
    weights = np.asarray(base.cam_weights, dtype=float)
    for out in outputs:
        if not np.array_equal(np.asarray(out.cam_weights, dtype=float), weights):
            raise DimensionError("backend returned different CAM weights across shifts")
    frame = MapFrame(base.fcn.frame.origin_x, base.fcn.frame.origin_y, base.fcn.frame.stride / f,
                     base.fcn.frame.scale_x, base.fcn.frame.scale_y)
    fcn = interlace({k: v.fcn.values for k, v in by_shift.items()}, f)
    feats = interlace({k: v.features.values for k, v in by_shift.items()}, f)
    return StitchedOutput(ConfidenceMap(fcn, frame), FeatureGrid(feats, frame), weights)


def shift_and_stitch(backend: ScorerBackend, region: Box, image_id: str, f: int,
                     detector: str = "root", max_workers: int = 1) -> ConfidenceMap:
    """``(rows*f) x (cols*f)`` FCN map at stride ``s/f``."""
    return stitch_outputs(backend, region, image_id, f, detector, max_workers).fcn


def _axis_weights(n_in: int, n_out: int):
    if n_in == 1:
        idx = np.zeros(n_out, dtype=int)
        return idx, idx, np.zeros(n_out)
    t = np.arange(n_out) * ((n_in - 1) / (n_out - 1)) if n_out > 1 else np.zeros(1)
    lo = np.clip(np.floor(t).astype(int), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, t - lo


def _axis_spacing(n_in: int, n_out: int) -> tuple[float, float]:
    """(new spacing / old spacing, shift of cell 0 in old-stride units)."""
    if n_out == 1:
        return 1.0, 0.0
    if n_in == 1:
        ratio = 1.0 / n_out
        return ratio, -(n_out - 1) / 2.0 * ratio
    return (n_in - 1) / (n_out - 1), 0.0


def upsample(cmap: ConfidenceMap, out_rows: int, out_cols: int) -> ConfidenceMap:
    """Bilinear upsampling with endpoint-aligned cell centers.

    The first and last cell centers keep their pixel positions; the frame is
    rescaled so the new centers land between them.
    """
    if out_rows < cmap.rows or out_cols < cmap.cols:
        raise InvalidParameterError(
            f"upsample cannot shrink {cmap.rows}x{cmap.cols} to {out_rows}x{out_cols}")
    v = cmap.values
    r0, r1, rt = _axis_weights(cmap.rows, out_rows)
    c0, c1, ct = _axis_weights(cmap.cols, out_cols)
    top = v[r0][:, c0] * (1 - ct) + v[r0][:, c1] * ct
    bottom = v[r1][:, c0] * (1 - ct) + v[r1][:, c1] * ct
    out = top * (1 - rt)[:, None] + bottom * rt[:, None]
    # interpolation can leave 1-ulp excursions; keep within the input range
    out = np.clip(out, v.min(), v.max())

    fr = cmap.frame
    ry, shift_y = _axis_spacing(cmap.rows, out_rows)
    rx, shift_x = _axis_spacing(cmap.cols, out_cols)
    # one shared stride: fold the x/y spacing difference into scale_x
    frame = MapFrame((fr.origin_x + shift_x * fr.stride) * ry / rx,
                     fr.origin_y + shift_y * fr.stride,
                     fr.stride * ry,
                     fr.scale_x * ry / rx,
                     fr.scale_y)
    return ConfidenceMap(out, frame)
