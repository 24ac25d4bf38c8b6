"""Command-line front end: track, synth, eval, train, selftest.

Exit codes: 0 success, 1 a check or run failed, 2 bad arguments or
missing input files. Diagnostics go to stderr; nothing is written to the
output path when inputs are missing.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import cv2
import numpy as np

from dawn import metrics, synth
from dawn import tracker as trk
from dawn.boxes import BoundingBox
from dawn.model import ModelSpec, init_weights, load_weights, save_weights


class UsageError(Exception):
    pass


def parse_box(text: str) -> BoundingBox:
    try:
        x, y, w, h = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,w,h, got {text!r}") from None
    if not (w > 0 and h > 0):
        raise argparse.ArgumentTypeError(f"box must have positive size, got {text!r}")
    return BoundingBox.from_xywh(x, y, w, h)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def to_gray8(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    if hi <= lo:
        return np.zeros(a.shape, dtype=np.uint8)
    return np.round(255.0 * (a - lo) / (hi - lo)).astype(np.uint8)


def write_pgm(path: Path, a: np.ndarray) -> None:
    if not cv2.imwrite(str(path), to_gray8(a)):
        raise OSError(f"could not write {path}")


def _require_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise UsageError(f"{what} {path} is not a directory")
    return path


def _out_dir(path: str | None) -> Path | None:
    if path is None:
        return None
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_track(args) -> int:
    seq_dir = _require_dir(Path(args.seq), "sequence")
    frame_paths = synth.list_frames(seq_dir)
    gt_path = seq_dir / synth.GROUNDTRUTH
    truth, truth_occ = synth.parse_groundtruth(gt_path.read_text()) if gt_path.exists() else ([], [])
    init_box = args.init or (truth[0] if truth else None)
    if init_box is None:
        raise UsageError(f"--init not given and {gt_path} does not exist")
    if args.weights:
        wpath = Path(args.weights)
        if not wpath.is_file():
            raise UsageError(f"weights file {wpath} not found")
        weights = load_weights(wpath)
        if weights.spec.backbone.name != args.preset:
            raise UsageError(f"weights are for preset {weights.spec.backbone.name!r}, not {args.preset!r}")
    else:
        weights = init_weights(ModelSpec.preset(args.preset), args.seed % 2**32)
    config = trk.TrackerConfig(ablate=args.ablate)

    heat_dir = _out_dir(args.dump_heatmaps)
    att_dir = _out_dir(args.dump_attention)
    mem_dir = _out_dir(args.dump_memory)
    overlay_dir = _out_dir(args.dump_overlay)
    frames = [synth.read_image(p) for p in frame_paths]

    def on_frame(k, box, result, state):
        stem = f"{k + 1:08d}"
        if heat_dir is not None and result is not None:
            write_pgm(heat_dir / f"{stem}.pgm", result.upsampled)
        if att_dir is not None and state.attention is not None:
            write_pgm(att_dir / f"{stem}.pgm", state.attention)
        if mem_dir is not None:
            arrays = {
                "fg_slots": state.fg_mem.slots,
                "fg_keys": state.fg_mem.keys,
                "fg_recency": state.fg_mem.recency,
                "last_fg_read": state.last_fg_read,
            }
            if state.bg_mem is not None:
                arrays.update(bg_slots=state.bg_mem.slots, bg_keys=state.bg_mem.keys, bg_recency=state.bg_mem.recency)
            np.savez(mem_dir / f"{stem}.npz", **{k_: np.asarray(v) for k_, v in arrays.items()})
        if overlay_dir is not None:
            boxes = [(truth[k], (255, 0, 0))] if k < len(truth) else []
            boxes.append((box, (0, 255, 0)))
            synth.write_image(overlay_dir / f"{stem}.png", synth.render_overlay(frames[k], boxes))

    result = metrics.run_sequence(frames, init_box, weights, config, on_frame=on_frame)
    text = metrics.format_results(result)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"tracked {len(result)} frames at {result.fps:.1f} fps", file=sys.stderr)
    return 0


def cmd_synth(args) -> int:
    path = Path(args.scenario)
    if not path.is_file():
        raise UsageError(f"scenario file {path} not found")
    scenario = synth.Scenario.from_dict(json.loads(path.read_text()))
    seq = synth.generate(scenario)
    synth.write_sequence(seq, args.out)
    print(f"wrote {len(seq.frames)} frames to {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    res_path, gt_path = Path(args.results), Path(args.truth)
    for p, what in ((res_path, "results"), (gt_path, "groundtruth")):
        if not p.is_file():
            raise UsageError(f"{what} file {p} not found")
    truth, occ = synth.parse_groundtruth(gt_path.read_text())
    result = metrics.read_results(res_path).with_truth(truth, occ)
    rep = metrics.report(result)
    if args.json:
        print(json.dumps(rep, indent=2, sort_keys=True))
    else:
        print(f"frames:            {rep['frames']}")
        print(f"mean IoU:          {rep['mean_iou']:.4f}")
        print(f"mean success AUC:  {rep['mean_success_auc']:.4f}")
        print(f"success@0.5:       {rep['success_at_0.5']:.4f}")
        print(f"failures:          {rep['failures']}")
        print(f"occluded frames:   {rep['occluded_frames']}")
    return 0


def cmd_train(args) -> int:
    from dawn import train

    if args.config:
        cpath = Path(args.config)
        if not cpath.is_file():
            raise UsageError(f"config file {cpath} not found")
        config = train.TrainConfig.from_file(cpath)
    else:
        config = train.TrainConfig()
    if args.iterations is not None:
        config.iterations = args.iterations

    def log(it, loss):
        if it % 50 == 0 or it == config.iterations - 1:
            print(f"iter {it:5d}  loss {loss:.6f}", file=sys.stderr)

    trace: list[float] = []
    try:
        weights, trace = train.fit(config, log=log)
    except train.TrainingDiverged as exc:
        trace = exc.trace
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    finally:
        if args.trace and trace:
            with open(args.trace, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("iteration", "loss"))
                w.writerows((k, repr(v)) for k, v in enumerate(trace))
    save_weights(weights, args.out)
    first, last = train.smoothed(trace)
    print(f"smoothed loss {first:.4f} -> {last:.4f}; weights written to {args.out}", file=sys.stderr)
    return 0


def cmd_selftest(args) -> int:
    from dawn import selftest

    return 0 if selftest.run(args.seed) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dawn", description="Dual-memory attention tracker on numpy.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="track a sequence directory and write a results CSV")
    t.add_argument("--seq", required=True, help="directory of numbered frames, optionally with groundtruth.txt")
    t.add_argument("--init", type=parse_box, help="initial box x,y,w,h (default: first groundtruth line)")
    t.add_argument("--out", help="results CSV (default: stdout)")
    t.add_argument("--preset", choices=("paper", "toy"), default="toy")
    t.add_argument("--weights", help="checkpoint written by `train`; random weights if omitted")
    t.add_argument("--dump-heatmaps", metavar="DIR", help="per-frame PGM of the upsampled response")
    t.add_argument("--dump-attention", metavar="DIR", help="per-frame PGM of the attention map")
    t.add_argument("--dump-memory", metavar="DIR", help="per-frame npz of both memory blocks")
    t.add_argument("--dump-overlay", metavar="DIR", help="per-frame PNG with predicted and true boxes")
    t.add_argument("--seed", type=_u64, default=0, help="seed for random weights when --weights is omitted")
    t.add_argument("--ablate", choices=("no-bg-memory", "no-attention"))
    t.set_defaults(func=cmd_track)

    s = sub.add_parser("synth", help="render a scenario JSON file to a sequence directory")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score a results CSV against ground truth")
    e.add_argument("--results", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--json", action="store_true", help="print the report as JSON")
    e.set_defaults(func=cmd_eval)

    tr = sub.add_parser("train", help="train the toy model on synthetic snippets")
    tr.add_argument("--config", help="JSON file of TrainConfig fields")
    tr.add_argument("--out", required=True, help="weights file to write")
    tr.add_argument("--trace", help="CSV of per-iteration loss")
    tr.add_argument("--iterations", type=int)
    tr.set_defaults(func=cmd_train)

    st = sub.add_parser("selftest", help="run the built-in oracle checks")
    st.add_argument("--seed", type=_u64, default=0)
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
