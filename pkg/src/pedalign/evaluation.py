"""Miss rate vs. false positives per image, and the log-average miss rate.

Ground truth outside the evaluated subset is kept as ignore regions:
detections on them count as neither true nor false positives.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .geometry import Box, ScoredBox, intersection, iou_matrix

MR_FLOOR = 1e-4
REFERENCE_FPPI = tuple(10.0 ** (-2.0 + k / 4.0) for k in range(9))


@dataclass(frozen=True)
class Annotation:
    image_id: str
    bb_full: Box
    bb_vis: Optional[Box] = None
    ignore: bool = False
    extra: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        if self.bb_vis is None:
            object.__setattr__(self, "bb_vis", self.bb_full)

    @property
    def visibility(self) -> float:
        inter = intersection(self.bb_vis, self.bb_full)
        return inter / self.bb_full.area

    def is_consistent(self, tol: float = 1e-9) -> bool:
        """Visible box lies inside the full box."""
        v, f = self.bb_vis, self.bb_full
        return (v.x >= f.x - tol and v.y >= f.y - tol
                and v.x2 <= f.x2 + tol and v.y2 <= f.y2 + tol)


class Label(str, enum.Enum):
    TP = "tp"
    FP = "fp"
    IGNORED = "ignored"


@dataclass(frozen=True)
class MatchResult:
    det_labels: list  # Label per detection, in input order
    gt_matched: list  # bool per annotation, in input order
    det_match: list  # annotation index or None per detection


@dataclass(frozen=True)
class EvalCurve:
    points: list  # (fppi, miss_rate), in sweep order
    log_avg_mr: float


def reasonable_filter(anns: Sequence[Annotation], min_height: float = 50.0,
                      min_visibility: float = 0.65) -> list[Annotation]:
    """Mark annotations outside ``h > min_height and visibility > min_visibility`` as ignore."""
    out = []
    for a in anns:
        keep = (not a.ignore and a.bb_full.h > min_height and a.visibility > min_visibility)
        out.append(a if keep == (not a.ignore) else dataclasses.replace(a, ignore=not keep))
    return out


def match(dets: Sequence[ScoredBox], anns: Sequence[Annotation], iou_thr: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching of one image's detections.

    Detections are visited by descending score (input order on ties). Each
    takes the unmatched evaluable annotation of highest IoU above
    ``iou_thr``; failing that it is ignored if it overlaps an ignore region
    above ``iou_thr``, else it is a false positive.
    """
    n_d, n_g = len(dets), len(anns)
    labels: list = [Label.FP] * n_d
    det_match: list = [None] * n_d
    matched = [False] * n_g
    if n_d == 0:
        return MatchResult(labels, matched, det_match)
    ious = iou_matrix([d.box for d in dets], [a.bb_full for a in anns])
    ignore = np.array([a.ignore for a in anns], dtype=bool)
    order = np.argsort(-np.array([d.score for d in dets]), kind="stable")
    for i in order:
        best, best_iou = None, iou_thr
        for j in range(n_g):
            if ignore[j] or matched[j]:
                continue
            if ious[i, j] > best_iou:
                best, best_iou = j, ious[i, j]
        if best is not None:
            matched[best] = True
            labels[i] = Label.TP
            det_match[i] = best
        elif n_g and np.any(ignore & (ious[i] > iou_thr)):
            labels[i] = Label.IGNORED
    return MatchResult(labels, matched, det_match)


def sweep(scored_labels: Iterable[tuple[float, Label]], n_images: int, n_gt: int) -> list[tuple[float, float]]:
    """(fppi, miss rate) at every distinct score threshold, highest first."""
    pairs = sorted(((s, l) for s, l in scored_labels if l != Label.IGNORED), key=lambda p: -p[0])
    points = []
    tp = fp = 0
    for k, (score, label) in enumerate(pairs):
        if label == Label.TP:
            tp += 1
        else:
            fp += 1
        if k + 1 < len(pairs) and pairs[k + 1][0] == score:
            continue
        points.append((fp / n_images, 1.0 - tp / n_gt))
    return points


def log_average_miss_rate(points: Sequence[tuple[float, float]]) -> float:
    """Geometric mean of the miss rate at nine log-spaced FPPI references in [1e-2, 1].

    At each reference the last sweep point with ``fppi <= ref`` is used (1.0
    if none); miss rates are floored at ``MR_FLOOR``.
    """
    sampled = []
    for ref in REFERENCE_FPPI:
        mr = 1.0
        for fppi, m in points:
            if fppi <= ref:
                mr = m
            else:
                break
        sampled.append(max(mr, MR_FLOOR))
    if min(sampled) == max(sampled):
        # exp(log(v)) is not always v in floating point
        return sampled[0]
    return math.exp(sum(math.log(v) for v in sampled) / len(sampled))


def curve(scored_labels: Iterable[tuple[float, Label]], n_images: int, n_gt: int) -> EvalCurve:
    if n_images < 1:
        raise ValidationError(f"n_images must be >= 1, got {n_images}")
    if n_gt <= 0:
        raise UndefinedMetricError("no evaluable ground truth: miss rate is undefined")
    points = sweep(scored_labels, n_images, n_gt)
    return EvalCurve(points, log_average_miss_rate(points))


def evaluate(dets_by_image: dict[str, Sequence[ScoredBox]], anns_by_image: dict[str, Sequence[Annotation]],
             image_ids: Sequence[str], iou_thr: float = 0.5, min_height: float = 50.0,
             min_visibility: float = 0.65) -> EvalCurve:
    """Filter, match per image and build the pooled curve."""
    scored: list[tuple[float, Label]] = []
    n_gt = 0
    for image_id in image_ids:
        anns = reasonable_filter(anns_by_image.get(image_id, []), min_height, min_visibility)
        dets = list(dets_by_image.get(image_id, []))
        n_gt += sum(not a.ignore for a in anns)
        res = match(dets, anns, iou_thr)
        scored.extend((d.score, l) for d, l in zip(dets, res.det_labels))
    return curve(scored, len(image_ids), n_gt)


def format_curve(c: EvalCurve) -> str:
    """Two-column ``fppi miss_rate`` table with round-trip exact floats."""
    lines = ["# fppi miss_rate"]
    lines += [f"{fppi!r} {mr!r}" for fppi, mr in c.points]
    return "\n".join(lines) + "\n"


def parse_curve(text: str) -> list[tuple[float, float]]:
    points = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b = line.split()
        points.append((float(a), float(b)))
    return points
