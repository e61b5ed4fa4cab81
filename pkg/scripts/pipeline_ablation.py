"""End-to-end log-average miss rate for several scoring variants of the align stage.

    python scripts/pipeline_ablation.py --n-images 20

Rows compare the detector output, aligned boxes keeping their input score,
the root score alone and the fused score, each with and without a second NMS
pass after alignment.
"""

import argparse
from dataclasses import replace

from pedalign.config import RunConfig
from pedalign.data import Dataset, Detection, ImageInfo
from pedalign.pipeline import detect_image, run_align, run_eval
from pedalign.synthetic import combined_backend, generate_scenes


def rescore(dets, key):
    return [replace(d, score=d.extra[key]) for d in dets]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n-images", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()
    base = RunConfig(seed=args.seed, n_images=args.n_images, jobs=args.jobs)
    scenes = generate_scenes(base.scene_params(), base.n_images)
    backend = combined_backend(scenes)
    ds = Dataset([ImageInfo(s.image_id, base.width, base.height) for s in scenes],
                 [a for s in scenes for a in s.pedestrians])
    dets = []
    for s in scenes:
        dets += detect_image([Detection(s.image_id, p.box, p.score) for p in s.proposals], s.saliency, base)
    print(f"{'detector output':38s} mr={run_eval(ds, dets, base).log_avg_mr:.4f}")
    variants = [
        ("fused, anchor reference", {}),
        ("fused, part reference", {"penalty_reference": "part"}),
        ("fused, no penalty", {"a": 0.0, "b": 0.0}),
    ]
    for post in (False, True):
        for label, over in variants:
            cfg = base.replace(post_nms=post, **over)
            aligned = run_align(backend, dets, cfg)
            tag = " +nms" if post else ""
            print(f"{label + tag:38s} mr={run_eval(ds, aligned, cfg).log_avg_mr:.4f}")
            if not over:
                for key in ("input_score", "root_score"):
                    # re-scoring only; NMS above already ran on fused scores
                    c = run_eval(ds, rescore(aligned, key), cfg)
                    print(f"{key + tag:38s} mr={c.log_avg_mr:.4f}")


if __name__ == "__main__":
    main()
