"""End-to-end stages behind the CLI: generate, detect, align, evaluate."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, TypeVar, Union

from .alignment import align_proposal
from .config import RunConfig
from .data import (Dataset, Detection, ImageInfo, dumps_jsonl, detection_to_record, group_by_image,
                   load_saliency, save_dataset, save_grid, saliency_path, write_text_atomic)
from .errors import MissingInputError, PedAlignError
from .evaluation import EvalCurve, evaluate
from .geometry import ScoredBox, expand_box, nms_indices
from .heatmap import ScorerBackend
from .parts import detect_parts, merge, part_boxes
from .saliency import SaliencyMap, reweight
from .synthetic import AnalyticBackend, combined_backend, generate_scenes

T = TypeVar("T")
R = TypeVar("R")

SCENE_FILE = "scene.json"
PROPOSALS_FILE = "proposals.jsonl"


def _map(fn: Callable[[T], R], items: Sequence[T], jobs: int) -> list[R]:
    """Ordered map, threaded when ``jobs > 1``."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _with_context(exc: PedAlignError, context: str) -> PedAlignError:
    exc.args = (f"{context}: {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
    return exc


# -- gen ----------------------------------------------------------------------

def generate_dataset(config: RunConfig, out_dir: Union[str, Path]) -> Dataset:
    """Write a synthetic dataset with saliency maps, proposals and the backend description."""
    out = Path(out_dir)
    scenes = generate_scenes(config.scene_params(), config.n_images)
    images = [ImageInfo(s.image_id, config.width, config.height) for s in scenes]
    anns = []
    proposals = []
    for s in scenes:
        for k, a in enumerate(s.pedestrians):
            anns.append(a)
        for p in s.proposals:
            extra = {"source": p.source}
            if p.truth is not None:
                extra["truth"] = s.pedestrians[p.truth].bb_full.as_list()
            proposals.append(Detection(s.image_id, p.box, p.score, extra))
    ds = Dataset(images, anns, out)
    ds.validate()
    save_dataset(ds, out)
    write_text_atomic(out / PROPOSALS_FILE, dumps_jsonl(detection_to_record(d) for d in proposals))
    for s in scenes:
        save_grid(s.saliency, saliency_path(out, s.image_id))
    scene = {"config": config.to_dict(), "backend": combined_backend(scenes).to_dict()}
    write_text_atomic(out / SCENE_FILE, json.dumps(scene, indent=1) + "\n")
    return ds


def load_backend(root: Union[str, Path]) -> AnalyticBackend:
    path = Path(root) / SCENE_FILE
    if not path.exists():
        raise MissingInputError(f"no backend description {path}; pass --backend DIR for stored maps")
    return AnalyticBackend.from_dict(json.loads(path.read_text(encoding="utf-8"))["backend"])


# -- detect -------------------------------------------------------------------

def detect_image(proposals: Sequence[Detection], smap: Optional[SaliencyMap], config: RunConfig) -> list[Detection]:
    """Saliency re-scoring (optional) then NMS, highest score first."""
    scored = []
    for p in proposals:
        sb = ScoredBox(p.box, p.score)
        if config.use_saliency:
            sb = reweight(sb, smap, config.th_b)
        scored.append(sb)
    keep = nms_indices(scored, config.nms_iou)
    return [Detection(proposals[i].image_id, scored[i].box, scored[i].score,
                      {**proposals[i].extra, "proposal_score": proposals[i].score}) for i in keep]


def run_detect(dataset: Dataset, proposals: Iterable[Detection], config: RunConfig) -> list[Detection]:
    by_image = group_by_image(proposals)
    known = set(dataset.image_ids)
    for image_id in by_image:
        if image_id not in known:
            raise MissingInputError(f"proposals reference unknown image_id {image_id!r}")
    ids = sorted(by_image)

    def one(image_id):
        smap = load_saliency(dataset.root, image_id) if config.use_saliency else None
        return detect_image(by_image[image_id], smap, config)

    out = []
    for dets in _map(one, ids, config.jobs):
        out.extend(dets)
    return out


# -- align --------------------------------------------------------------------

def align_detection(backend: ScorerBackend, det: Detection, config: RunConfig) -> Detection:
    """Anchor the box, run the part detectors there and fuse the scores."""
    params = config.align_params()
    anchor = align_proposal(backend, det.box, det.image_id, params)
    aligned = anchor.aligned_box
    root = backend.evaluate(expand_box(aligned, params.expand_ratio), det.image_id, (0.0, 0.0), "root").score
    parts = detect_parts(backend, aligned, det.image_id, params)
    refs = [b.center for b in part_boxes(aligned).values()] if config.penalty_reference == "part" else None
    score = merge(root, parts, (anchor.x_a, anchor.y_a), config.merge_params(), (aligned.w, aligned.h), refs)
    extra = dict(det.extra)
    extra.update({
        "input_box": det.box.as_list(),
        "input_score": det.score,
        "root_score": root,
        "parts": {p.kind.value: {"score": p.score, "position": list(p.position)} for p in parts},
    })
    return Detection(det.image_id, aligned, score, extra)


def run_align(backend: ScorerBackend, dets: Sequence[Detection], config: RunConfig) -> list[Detection]:
    def one(item):
        k, det = item
        try:
            return align_detection(backend, det, config)
        except PedAlignError as exc:
            raise _with_context(exc, f"detection {k} (image_id {det.image_id!r})")

    out = _map(one, list(enumerate(dets)), config.jobs)
    if config.post_nms:
        kept = []
        for image_id, group in sorted(group_by_image(out).items()):
            kept.extend(group[i] for i in nms_indices([d.scored for d in group], config.nms_iou))
        out = kept
    out.sort(key=lambda d: (d.image_id, -d.score))
    return out


# -- eval ---------------------------------------------------------------------

def run_eval(dataset: Dataset, dets: Iterable[Detection], config: RunConfig) -> EvalCurve:
    by_image = group_by_image(dets)
    known = set(dataset.image_ids)
    for image_id in by_image:
        if image_id not in known:
            raise MissingInputError(f"detections reference unknown image_id {image_id!r}")
    scored = {k: [d.scored for d in v] for k, v in by_image.items()}
    return evaluate(scored, dataset.annotations_by_image(), dataset.image_ids, config.eval_iou,
                    config.min_height, config.min_visibility)


def summary(c: EvalCurve, dataset: Dataset) -> dict:
    return {"log_avg_mr": c.log_avg_mr, "n_images": len(dataset.images), "n_points": len(c.points)}
