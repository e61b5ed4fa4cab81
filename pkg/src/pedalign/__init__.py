"""Pedestrian detection post-processing: saliency re-scoring, box alignment
on stitched confidence maps, part-score merging and miss-rate evaluation."""

from .alignment import AlignParams, AnchorPosition, CoarsePosition, align, align_proposal, coarse_position, delta
from .evaluation import Annotation, EvalCurve, curve, match, reasonable_filter
from .geometry import Box, MapFrame, ScoredBox, cell_to_pixel, expand_box, iou, nms, pixel_to_cell
from .heatmap import ConfidenceMap, FeatureGrid, cam, cam_total, shift_and_stitch, upsample
from .parts import MergeParams, PartDetection, PartKind, merge, part_boxes, penalty
from .saliency import SaliencyMap, reweight, saliency_ground_truth, saliency_weight

__version__ = "0.1.0"
