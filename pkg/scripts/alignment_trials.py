"""Monte-Carlo check of box alignment on planted pedestrians.

Prints mean proposal and anchor center errors for a sweep of L and jitter.

    python scripts/alignment_trials.py --trials 200 --L 0.5 0.6 0.8 --jitter 4 8 12
"""

import argparse
import math

import numpy as np

from pedalign.alignment import AlignParams, align_proposal
from pedalign.synthetic import SceneParams, generate_scene


def trial_errors(n_trials, L, jitter, noise, clamp):
    params = AlignParams(L=L, clamp=clamp)
    before, after = [], []
    for seed in range(n_trials):
        s = generate_scene(SceneParams(n_pedestrians=1, n_distractors=0, jitter=jitter, seed=seed, noise=noise))
        prop = s.proposals[0]
        tx, ty = s.pedestrians[prop.truth].bb_full.center
        a = align_proposal(s.backend, prop.box, s.image_id, params)
        before.append(math.hypot(prop.box.cx - tx, prop.box.cy - ty))
        after.append(math.hypot(a.x_a - tx, a.y_a - ty))
    return float(np.mean(before)), float(np.mean(after))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--L", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8])
    ap.add_argument("--jitter", type=float, nargs="+", default=[8.0])
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--clamp", action="store_true")
    args = ap.parse_args()
    print(f"{'L':>5} {'jitter':>7} {'proposal':>9} {'anchor':>8} {'reduction':>9}")
    for L in args.L:
        for j in args.jitter:
            b, a = trial_errors(args.trials, L, j, args.noise, args.clamp)
            print(f"{L:5.2f} {j:7.1f} {b:9.2f} {a:8.2f} {1 - a / b:9.1%}")


if __name__ == "__main__":
    main()
