"""Render the blackout scenario, track it and write overlays plus per-frame status.

    python3 scripts/occlusion_demo.py --weights runs/toy/weights.npz --out runs/occlusion
"""

import argparse
from pathlib import Path

from dawn import metrics, model, synth
from dawn import tracker as trk


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--weights", required=True)
    ap.add_argument("--out", default="runs/occlusion")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    weights = model.load_weights(args.weights)
    seq = synth.generate(synth.Scenario.preset("occlusion", args.seed))
    for k, (box, result, state) in enumerate(trk.track(seq.frames, seq.truth[0], weights)):
        overlay = synth.render_overlay(seq.frames[k], [(seq.truth[k], (255, 0, 0)), (box, (0, 255, 0))])
        synth.write_image(out / synth.frame_name(k), overlay)
        conf = result.confidence if result is not None else float("nan")
        mark = "occluded" if state.occluded else ""
        print(f"{k:3d}  iou {metrics.iou(box, seq.truth[k]):.3f}  conf {conf:10.3f}  {mark}")


if __name__ == "__main__":
    main()
