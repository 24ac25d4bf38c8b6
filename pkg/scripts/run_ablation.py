"""Full model against the two ablations on seeded distractor+occlusion sequences.

    python3 scripts/run_ablation.py --weights runs/toy/weights.npz
"""

import argparse
from dataclasses import replace

import numpy as np

from dawn import metrics, model, synth
from dawn import tracker as trk


def sequence(seed):
    sc = synth.Scenario.preset("distractor", seed, occlusion=(20, 27), n_frames=60, distractors=3, distractor_speed=1.0)
    H, W = sc.frame_size
    rng = np.random.default_rng(seed)
    start = (float(rng.uniform(30, W - 30)), float(rng.uniform(30, H - 30)))
    return synth.generate(replace(sc, start=start, velocity=tuple(rng.uniform(-1, 1, 2))))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--weights", required=True)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    weights = model.load_weights(args.weights)

    names = {None: "full", "no-bg-memory": "no-bg-memory", "no-attention": "no-attention"}
    table = {ab: [] for ab in trk.ABLATIONS}
    print(f"{'seed':>4}  " + "  ".join(f"{names[ab]:>13}" for ab in trk.ABLATIONS))
    for seed in range(args.seeds):
        seq = sequence(seed)
        row = []
        for ab in trk.ABLATIONS:
            res = metrics.run_sequence(seq.frames, seq.truth[0], weights, trk.TrackerConfig(ablate=ab), truth=seq.truth)
            res.ious = res.ious[1:]
            auc = metrics.success_curve(res).auc
            table[ab].append(auc)
            row.append(auc)
        print(f"{seed:>4}  " + "  ".join(f"{v:13.4f}" for v in row))
    print(f"{'mean':>4}  " + "  ".join(f"{np.mean(table[ab]):13.4f}" for ab in trk.ABLATIONS))


if __name__ == "__main__":
    main()
