"""Overlap metrics, success curves, failure counting and results CSV I/O."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dawn import tracker as trk
from dawn.boxes import BoundingBox

CSV_HEADER = ("frame", "x", "y", "w", "h", "peak", "occluded")
THRESHOLDS = np.round(np.arange(0, 101) / 100.0, 2)
REINIT_DELAY = 5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ax, ay, aw, ah = a.xywh()
    bx, by, bw, bh = b.xywh()
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return float(min(1.0, max(0.0, inter / union))) if union > 0 else 0.0


@dataclass
class SequenceResult:
    boxes: list[BoundingBox]
    ious: list[float] = field(default_factory=list)
    peaks: list[float] = field(default_factory=list)
    occluded: list[bool] = field(default_factory=list)
    truth_occluded: list[bool] = field(default_factory=list)
    fps: float = 0.0

    def __len__(self):
        return len(self.boxes)

    def with_truth(self, truth: list[BoundingBox], truth_occluded: list[bool] | None = None) -> "SequenceResult":
        if len(truth) != len(self.boxes):
            raise ValueError(f"{len(self.boxes)} predictions but {len(truth)} ground-truth boxes")
        self.ious = [iou(p, t) for p, t in zip(self.boxes, truth)]
        self.truth_occluded = list(truth_occluded) if truth_occluded else [False] * len(truth)
        return self


@dataclass
class SuccessCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray

    @property
    def auc(self) -> float:
        return float(self.accuracy.mean())


def success_curve(result: SequenceResult) -> SuccessCurve:
    if not result.ious:
        raise ValueError("success curve needs at least one scored frame")
    ious = np.asarray(result.ious)
    acc = np.array([(ious >= t).mean() for t in THRESHOLDS])
    return SuccessCurve(THRESHOLDS.copy(), acc)


def failure_count(result: SequenceResult, reinit_overlap: float = 0.0) -> int:
    """Number of failure onsets: IoU falls to ``reinit_overlap`` or below on a
    frame whose truth is not flagged occluded, after a frame that was not failing.
    """
    if not result.ious:
        raise ValueError("failure counting needs ground truth")
    occ = result.truth_occluded or [False] * len(result.ious)
    count, failing = 0, False
    for v, o in zip(result.ious, occ):
        if o:
            continue
        now = v <= reinit_overlap
        if now and not failing:
            count += 1
        failing = now
    return count


def run_sequence(frames, init_box: BoundingBox, weights, config=None, truth=None, truth_occluded=None, on_frame=None) -> SequenceResult:
    """Unsupervised run: first-frame box only, no resets."""
    config = config or trk.TrackerConfig()
    boxes, peaks, occ = [], [], []
    start = time.perf_counter()
    for k, (box, result, state) in enumerate(trk.track(frames, init_box, weights, config)):
        boxes.append(box)
        peaks.append(result.confidence if result is not None else 0.0)
        occ.append(state.occluded)
        if on_frame is not None:
            on_frame(k, box, result, state)
    elapsed = time.perf_counter() - start
    out = SequenceResult(boxes, peaks=peaks, occluded=occ, fps=len(boxes) / elapsed if elapsed > 0 else 0.0)
    if truth is not None:
        out.with_truth(truth, truth_occluded)
    return out


def run_supervised(frames, truth, weights, config=None, truth_occluded=None, reinit_overlap: float = 0.0, delay: int = REINIT_DELAY):
    """Reset protocol: on failure, re-initialise from truth ``delay`` frames later.

    Returns ``(result, failures)``; frames skipped while waiting to re-initialise
    are reported with the truth box and IoU 0.
    """
    config = config or trk.TrackerConfig()
    occ_truth = list(truth_occluded) if truth_occluded else [False] * len(truth)
    rows: list[tuple[BoundingBox, float, float, bool]] = []
    failures = 0
    k, state = 0, None
    n = len(frames)
    while k < n:
        if state is None:
            if occ_truth[k]:
                rows.append((truth[k], 0.0, 0.0, True))
            else:
                state = trk.init(frames[k], truth[k], weights, config)
                rows.append((truth[k], 1.0, 0.0, False))
            k += 1
            continue
        state, box, result = trk.step(state, frames[k], weights, config)
        v = iou(box, truth[k])
        rows.append((box, v, result.confidence, state.occluded))
        k += 1
        if v <= reinit_overlap and not occ_truth[k - 1]:
            failures += 1
            state = None
            skip = min(delay - 1, n - k)
            rows.extend((truth[j], 0.0, 0.0, False) for j in range(k, k + skip))
            k += skip
    boxes, ious, peaks, occ = (list(col) for col in zip(*rows))
    res = SequenceResult(boxes, ious, peaks, occ, occ_truth)
    return res, failures


# --- results CSV -----------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{float(v):.9g}"


def format_results(result: SequenceResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for k, box in enumerate(result.boxes):
        x, y, bw, bh = box.xywh()
        peak = result.peaks[k] if k < len(result.peaks) else 0.0
        occ = result.occluded[k] if k < len(result.occluded) else False
        w.writerow([k, _fmt(x), _fmt(y), _fmt(bw), _fmt(bh), _fmt(peak), int(bool(occ))])
    return buf.getvalue()


def write_results(result: SequenceResult, path) -> None:
    Path(path).write_text(format_results(result))


def parse_results(text: str) -> SequenceResult:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"results CSV must start with header {','.join(CSV_HEADER)}")
    boxes, peaks, occ = [], [], []
    for row in rows[1:]:
        if not row:
            continue
        _, x, y, w, h, peak, o = row
        boxes.append(BoundingBox.from_xywh(float(x), float(y), float(w), float(h)))
        peaks.append(float(peak))
        occ.append(o.strip() == "1")
    return SequenceResult(boxes, peaks=peaks, occluded=occ)


def read_results(path) -> SequenceResult:
    return parse_results(Path(path).read_text())


def report(result: SequenceResult) -> dict:
    curve = success_curve(result)
    return {
        "frames": len(result),
        "mean_iou": float(np.mean(result.ious)),
        "mean_success_auc": curve.auc,
        "success_at_0.5": float(curve.accuracy[50]),
        "failures": failure_count(result),
        "occluded_frames": int(sum(result.occluded)),
    }
