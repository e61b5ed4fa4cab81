"""Bounding-box alignment on stitched confidence maps.

A proposal is enlarged, scored densely by shift-and-stitch, and the best
target-sized window in each map (FCN and CAM) pulls the proposal center
toward it by a confidence-ratio weighted step. The two steps are averaged
into the anchor position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, InvalidParameterError
from .geometry import Box, MapFrame, cell_to_pixel, expand_box, pixel_to_cell_float
from .heatmap import INPUT_H, INPUT_W, STRIDE, ConfidenceMap, ScorerBackend, StitchedOutput, stitch_outputs, upsample


@dataclass(frozen=True)
class CoarsePosition:
    x_p: float
    y_p: float
    target_w: float
    target_h: float
    mean_value: float
    row0: int
    col0: int
    n_rows: int
    n_cols: int


@dataclass(frozen=True)
class AnchorPosition:
    x_a: float
    y_a: float
    aligned_box: Box
    delta_fcn: tuple[float, float] = (0.0, 0.0)
    delta_cam: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class AlignParams:
    expand_ratio: float = 0.25
    f: int = 4
    L: float = 0.6
    clamp: bool = False
    upsample_dims: Optional[tuple[int, int]] = None
    # shift the base window left/up by half the shift span so the stitched
    # map is centered on the enlarged region
    center_shifts: bool = True

    def __post_init__(self):
        if self.expand_ratio < 0:
            raise InvalidParameterError(f"expand_ratio must be >= 0, got {self.expand_ratio}")
        if not (0 < self.L <= 1):
            raise InvalidParameterError(f"L must be in (0, 1], got {self.L}")
        if int(self.f) != self.f or self.f < 1:
            raise InvalidParameterError(f"f must be a positive integer, got {self.f}")


def target_size(L: float, W: float, H: float) -> tuple[float, float]:
    if not (0 < L <= 1):
        raise InvalidParameterError(f"enlarging ratio L must be in (0, 1], got {L!r}")
    if not (W > 0 and H > 0):
        raise InvalidParameterError(f"region size must be positive, got {W}x{H}")
    return L * W, L * H


def target_cells(frame: MapFrame, target_w: float, target_h: float) -> tuple[int, int]:
    n_cols = max(1, int(round(target_w / frame.spacing_x)))
    n_rows = max(1, int(round(target_h / frame.spacing_y)))
    return n_rows, n_cols


def window_means(values: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """Mean of every ``n_rows x n_cols`` window, indexed by its top-left cell."""
    # summing each window directly (not via prefix sums) keeps equal windows bit-equal
    return sliding_window_view(values, (n_rows, n_cols)).sum(axis=(-2, -1)) / (n_rows * n_cols)


def window_center(frame: MapFrame, row0: int, col0: int, n_rows: int, n_cols: int) -> tuple[float, float]:
    return cell_to_pixel(frame, row0 + (n_rows - 1) / 2.0, col0 + (n_cols - 1) / 2.0)


def coarse_position(cmap: ConfidenceMap, target_w: float, target_h: float) -> CoarsePosition:
    """Placement of a target-sized window with the largest mean value.

    Exhaustive search at one-cell stride; ties go to the smallest row, then
    the smallest column.
    """
    n_rows, n_cols = target_cells(cmap.frame, target_w, target_h)
    if n_rows > cmap.rows or n_cols > cmap.cols:
        raise InvalidParameterError(
            f"target of {n_rows}x{n_cols} cells does not fit a {cmap.rows}x{cmap.cols} map")
    means = window_means(cmap.values, n_rows, n_cols)
    # argmax returns the first maximum in row-major order
    row0, col0 = np.unravel_index(int(np.argmax(means)), means.shape)
    x_p, y_p = window_center(cmap.frame, row0, col0, n_rows, n_cols)
    return CoarsePosition(x_p, y_p, target_w, target_h, float(means[row0, col0]),
                          int(row0), int(col0), n_rows, n_cols)


def confidence_ratio(target_values, original_values) -> float:
    """``2 * sum((t - o)^2) / (sum(t^2) + sum(o^2))``, 0 when both are all zero."""
    t = np.asarray(target_values, dtype=float)
    o = np.asarray(original_values, dtype=float)
    if t.shape != o.shape:
        raise DimensionError(f"target window {t.shape} and original window {o.shape} differ in shape")
    # r is scale-free; normalizing keeps tiny values from underflowing to 0/0
    scale = max(float(np.max(np.abs(t), initial=0.0)), float(np.max(np.abs(o), initial=0.0)))
    if scale == 0.0:
        return 0.0
    t = t.ravel() / scale
    o = o.ravel() / scale
    den = float(np.dot(t, t) + np.dot(o, o))
    if den == 0.0:
        return 0.0
    d = t - o
    return 2.0 * float(np.dot(d, d)) / den


def original_window(frame: MapFrame, rows: int, cols: int, n_rows: int, n_cols: int,
                    center: tuple[float, float]) -> tuple[int, int]:
    """Top-left cell of the ``n_rows x n_cols`` window centered nearest ``center``.

    Half-cell ties round toward the smaller index (matching the search
    tie-break); the window is clamped into the map.
    """
    rc, cc = pixel_to_cell_float(frame, center[0], center[1])
    row0 = math.ceil(rc - (n_rows - 1) / 2.0 - 0.5 - 1e-9)
    col0 = math.ceil(cc - (n_cols - 1) / 2.0 - 0.5 - 1e-9)
    row0 = min(max(row0, 0), rows - n_rows)
    col0 = min(max(col0, 0), cols - n_cols)
    return row0, col0


def delta(cmap: ConfidenceMap, target: CoarsePosition, original_center: tuple[float, float],
          clamp: bool = False) -> tuple[float, float]:
    x_o, y_o = original_center
    nr, nc = target.n_rows, target.n_cols
    r0, c0 = original_window(cmap.frame, cmap.rows, cmap.cols, nr, nc, original_center)
    t = cmap.values[target.row0:target.row0 + nr, target.col0:target.col0 + nc]
    o = cmap.values[r0:r0 + nr, c0:c0 + nc]
    r = confidence_ratio(t, o)
    if clamp:
        r = min(r, 1.0)
    return r * (target.x_p - x_o), r * (target.y_p - y_o)


def align(original: Box, delta_fcn: tuple[float, float], delta_cam: tuple[float, float]) -> AnchorPosition:
    x_a = original.cx + (delta_fcn[0] + delta_cam[0]) / 2.0
    y_a = original.cy + (delta_fcn[1] + delta_cam[1]) / 2.0
    return AnchorPosition(x_a, y_a, Box.from_center(x_a, y_a, original.w, original.h),
                          tuple(delta_fcn), tuple(delta_cam))


def centered_region(region: Box, f: int, stride: int = STRIDE) -> Box:
    """Base window whose ``f*f`` rightward/downward shifts are centered on ``region``."""
    half_span = (f - 1) / 2.0 * (stride / f)
    return region.translate(-half_span * region.w / INPUT_W, -half_span * region.h / INPUT_H)


def default_upsample_dims(cmap: ConfidenceMap, target_w: float, target_h: float) -> tuple[int, int]:
    """Output size giving square cells in image pixels.

    The coarser axis is refined to the finer axis' pixel spacing. Each axis
    is then grown by at most a few cells so that ``out - n_target`` is even,
    which makes a window centered on the map reachable.
    """
    fr = cmap.frame
    fine = min(fr.spacing_x, fr.spacing_y)
    out_r = int(round((cmap.rows - 1) * fr.spacing_y / fine)) + 1 if cmap.rows > 1 else 1
    out_c = int(round((cmap.cols - 1) * fr.spacing_x / fine)) + 1 if cmap.cols > 1 else 1
    out_r, out_c = max(out_r, cmap.rows), max(out_c, cmap.cols)
    for _ in range(4):
        n_r, n_c = target_cells(upsample(cmap, out_r, out_c).frame, target_w, target_h)
        odd_r, odd_c = (out_r - n_r) % 2, (out_c - n_c) % 2
        if not (odd_r or odd_c):
            break
        out_r += odd_r
        out_c += odd_c
    return out_r, out_c


@dataclass(frozen=True)
class Located:
    cmap: ConfidenceMap
    position: CoarsePosition


def locate(cmap: ConfidenceMap, target_w: float, target_h: float,
           upsample_dims: Optional[tuple[int, int]] = None) -> Located:
    dims = upsample_dims or default_upsample_dims(cmap, target_w, target_h)
    up = upsample(cmap, *dims)
    return Located(up, coarse_position(up, target_w, target_h))


def stitch_region(backend: ScorerBackend, region: Box, image_id: str, params: AlignParams,
                  detector: str = "root", max_workers: int = 1) -> StitchedOutput:
    stride = getattr(backend, "stride", STRIDE)
    base = centered_region(region, params.f, stride) if params.center_shifts else region
    return stitch_outputs(backend, base, image_id, params.f, detector, max_workers)


def align_proposal(backend: ScorerBackend, proposal: Box, image_id: str,
                   params: AlignParams = AlignParams(), max_workers: int = 1) -> AnchorPosition:
    region = expand_box(proposal, params.expand_ratio)
    stitched = stitch_region(backend, region, image_id, params, "root", max_workers)
    tw, th = target_size(params.L, region.w, region.h)
    deltas = []
    for cmap in (stitched.fcn, stitched.cam()):
        found = locate(cmap, tw, th, params.upsample_dims)
        deltas.append(delta(found.cmap, found.position, proposal.center, params.clamp))
    return align(proposal, deltas[0], deltas[1])
