"""Regenerate the bundled reference scene and its golden evaluation table.

The golden curve is computed by the brute-force sweep oracle in
``tests/oracles.py`` straight from the JSON-lines files, without going
through ``pedalign.evaluation``. Run from the repository root::

    python scripts/make_golden.py
"""

import json
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import log_avg_oracle, sweep_oracle  # noqa: E402

from pedalign.cli import main  # noqa: E402

REF = ROOT / "tests" / "data" / "reference"
SEED = 2024


def read(path):
    return [json.loads(l) for l in path.read_text().splitlines() if l.strip()]


def oracle_curve(root, det_path, min_height=50.0, min_visibility=0.65, thr=0.5):
    images = [r["image_id"] for r in read(root / "images.jsonl")]
    anns = read(root / "annotations.jsonl")
    dets = read(det_path)
    per_image = []
    for image_id in images:
        gts, ignore = [], []
        for a in anns:
            if a["image_id"] != image_id:
                continue
            full = a["bb_full"]
            vis = a.get("bb_vis") or full
            visibility = (vis[2] * vis[3]) / (full[2] * full[3])
            ok = not a.get("ignore", False) and full[3] > min_height and visibility > min_visibility
            gts.append(full)
            ignore.append(not ok)
        mine = [d for d in dets if d["image_id"] == image_id]
        per_image.append(([d["box"] for d in mine], [d["score"] for d in mine], gts, ignore))
    points = sweep_oracle(per_image, thr)
    return points, log_avg_oracle(points)


def main_():
    args = ["gen", str(REF), "--seed", str(SEED), "--n-images", "6", "--occlusion", "0.25",
            "--set", "n_distractors=4"]
    if main(args) or main(["detect", str(REF)]):
        raise SystemExit("pipeline failed")
    # only the files the tests use are kept
    (REF / "scene.json").unlink()
    (REF / "proposals.jsonl").unlink()
    shutil.rmtree(REF / "saliency")
    points, lamr = oracle_curve(REF, REF / "detections.jsonl")
    lines = ["# fppi miss_rate"] + [f"{f!r} {m!r}" for f, m in points]
    (REF / "golden_curve.txt").write_text("\n".join(lines) + "\n")
    (REF / "golden_summary.json").write_text(json.dumps({"log_avg_mr": lamr, "n_points": len(points)}) + "\n")
    print(f"{len(points)} points, log_avg_mr={lamr!r}")


if __name__ == "__main__":
    main_()
