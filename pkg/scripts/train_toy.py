"""Train the toy model with the default schedule and save weights plus loss trace.

    python3 scripts/train_toy.py --out runs/toy
"""

import argparse
import csv
import json
from dataclasses import replace
from pathlib import Path

from dawn import model, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--iterations", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = replace(train.TrainConfig(), iterations=args.iterations, seed=args.seed)
    weights, trace = train.fit(config, log=lambda it, loss: it % 50 == 0 and print(f"{it:4d} {loss:.4f}"))
    model.save_weights(weights, out / "weights.npz")
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "loss"))
        w.writerows(enumerate(trace))
    first, last = train.smoothed(trace)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    print(f"smoothed loss {first:.4f} -> {last:.4f} (ratio {last / first:.3f})")


if __name__ == "__main__":
    main()
