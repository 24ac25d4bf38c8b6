"""Deterministic synthetic tracking sequences with exact ground truth.

Scenario kinds mirror the usual difficulty classes: ``static`` and
``linear-motion`` baselines, ``occlusion`` (full-frame blackout or an opaque
block over the target), ``distractor`` (pixel-identical copies of the
target), ``blur`` (sub-frame averaging along the velocity) and
``appearance-change`` (hue rotation of the target texture).

On disk a sequence is a directory of ``00000001.png, 00000002.png, ...`` plus
``groundtruth.txt`` with one ``x,y,w,h`` line per frame (top-left corner),
where occluded frames carry a trailing ``,occ``.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import cv2
import numpy as np

from dawn.boxes import BoundingBox

KINDS = ("static", "linear-motion", "occlusion", "distractor", "blur", "appearance-change")
GROUNDTRUTH = "groundtruth.txt"


@dataclass(frozen=True)
class Scenario:
    kind: str = "static"
    n_frames: int = 50
    frame_size: tuple[int, int] = (120, 160)  # (height, width)
    target_size: tuple[float, float] = (16.0, 16.0)  # (w, h)
    target_shape: str = "rect"  # rect | ellipse
    target_color: tuple[int, int, int] = (230, 70, 40)
    texture: str = "checker"  # checker | noise | flat
    start: tuple[float, float] | None = None  # target centre (x, y); frame centre if None
    velocity: tuple[float, float] = (0.0, 0.0)
    occlusion: tuple[int, int] | None = None  # inclusive frame range
    occluder: str = "blackout"  # blackout | block
    distractors: int = 0
    distractor_speed: float = 1.0
    blur: int = 0  # sub-frame samples; 0 or 1 disables blur
    hue_shift: float = 0.0  # degrees per frame
    background_contrast: float = 0.12
    seed: int = 0

    @classmethod
    def preset(cls, kind: str, seed: int = 0, **overrides) -> "Scenario":
        if kind not in KINDS:
            raise ValueError(f"unknown scenario kind {kind!r}; choose from {KINDS}")
        defaults: dict = {}
        if kind == "linear-motion":
            defaults = {"velocity": (1.0, 0.5), "start": (50.0, 50.0)}
        elif kind == "occlusion":
            defaults = {"occlusion": (20, 30), "velocity": (0.3, 0.0), "start": (70.0, 60.0)}
        elif kind == "distractor":
            defaults = {"distractors": 2, "velocity": (0.6, 0.3), "start": (60.0, 50.0)}
        elif kind == "blur":
            defaults = {"blur": 7, "velocity": (2.0, 1.0), "start": (40.0, 40.0)}
        elif kind == "appearance-change":
            defaults = {"hue_shift": 3.0, "velocity": (0.5, 0.0), "start": (60.0, 60.0)}
        return cls(kind=kind, seed=seed, **{**defaults, **overrides})

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        kind = data.pop("kind", "static")
        seed = data.pop("seed", 0)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown scenario fields: {unknown}")
        for key in ("frame_size", "target_size", "target_color", "start", "velocity", "occlusion"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls.preset(kind, seed, **data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticSequence:
    frames: list[np.ndarray]  # uint8 RGB, (H, W, 3)
    truth: list[BoundingBox]
    occluded: list[bool] = field(default_factory=list)
    scenario: Scenario | None = None

    def __len__(self):
        return len(self.frames)


def _reflect(pos: float, vel: float, lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return (lo + hi) / 2.0, 0.0
    while pos < lo or pos > hi:
        if pos < lo:
            pos, vel = 2 * lo - pos, -vel
        else:
            pos, vel = 2 * hi - pos, -vel
    return pos, vel


def _trajectory(start, velocity, n: int, size, frame_hw) -> list[tuple[float, float]]:
    """Constant-velocity centres, reflected at the frame borders."""
    (x, y), (vx, vy) = start, velocity
    w, h = size
    H, W = frame_hw
    out = []
    for _ in range(n):
        out.append((x, y))
        x, vx = _reflect(x + vx, vx, w / 2.0, W - w / 2.0)
        y, vy = _reflect(y + vy, vy, h / 2.0, H - h / 2.0)
    return out


def _rotate_hue(rgb, degrees: float) -> np.ndarray:
    r, g, b = (np.asarray(rgb, dtype=np.float64) / 255.0).tolist()
    hh, s, v = colorsys.rgb_to_hsv(r, g, b)
    out = colorsys.hsv_to_rgb((hh + degrees / 360.0) % 1.0, s, v)
    return np.array(out) * 255.0


class _Renderer:
    def __init__(self, sc: Scenario):
        self.sc = sc
        rng = np.random.default_rng(sc.seed)
        H, W = sc.frame_size
        coarse = rng.normal(0.0, 1.0, (max(H // 8, 2), max(W // 8, 2), 3))
        smooth = cv2.resize(coarse, (W, H), interpolation=cv2.INTER_CUBIC)
        self.background = np.clip(128.0 + 255.0 * sc.background_contrast * smooth / 2.0, 0, 255)
        tw, th = int(np.ceil(sc.target_size[0])), int(np.ceil(sc.target_size[1]))
        if sc.texture == "noise":
            self.pattern = rng.random((th, tw)) < 0.5
        elif sc.texture == "checker":
            cell = max(1, min(tw, th) // 4)
            yy, xx = np.mgrid[0:th, 0:tw]
            self.pattern = ((yy // cell + xx // cell) % 2).astype(bool)
        elif sc.texture == "flat":
            self.pattern = np.ones((th, tw), dtype=bool)
        else:
            raise ValueError(f"unknown texture {sc.texture!r}")
        self.rng = rng

    def colors(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        base = _rotate_hue(self.sc.target_color, self.sc.hue_shift * t)
        return base, base * 0.35

    def paint(self, canvas: np.ndarray, centre, t: int, weight: float = 1.0) -> None:
        """Alpha-blend one copy of the target onto ``canvas`` (float)."""
        sc = self.sc
        w, h = sc.target_size
        H, W = canvas.shape[:2]
        left, top = centre[0] - w / 2.0, centre[1] - h / 2.0
        # pixels whose centre lies inside the box
        j0, j1 = max(0, int(np.ceil(left - 0.5))), min(W, int(np.ceil(left + w - 0.5)))
        i0, i1 = max(0, int(np.ceil(top - 0.5))), min(H, int(np.ceil(top + h - 0.5)))
        if j1 <= j0 or i1 <= i0:
            return
        jj, ii = np.meshgrid(np.arange(j0, j1), np.arange(i0, i1))
        u = np.clip(np.floor(jj + 0.5 - left).astype(int), 0, self.pattern.shape[1] - 1)
        v = np.clip(np.floor(ii + 0.5 - top).astype(int), 0, self.pattern.shape[0] - 1)
        inside = np.ones_like(u, dtype=bool)
        if sc.target_shape == "ellipse":
            dx = (jj + 0.5 - centre[0]) / (w / 2.0)
            dy = (ii + 0.5 - centre[1]) / (h / 2.0)
            inside = dx * dx + dy * dy <= 1.0
        elif sc.target_shape != "rect":
            raise ValueError(f"unknown target shape {sc.target_shape!r}")
        light, dark = self.colors(t)
        pix = np.where(self.pattern[v, u][..., None], light, dark)
        region = canvas[i0:i1, j0:j1]
        region[inside] = (1.0 - weight) * region[inside] + weight * pix[inside]


def generate(scenario: Scenario) -> SyntheticSequence:
    """Render every frame and its exact ground-truth box."""
    sc = scenario
    H, W = sc.frame_size
    w, h = sc.target_size
    if w <= 0 or h <= 0:
        raise ValueError("target size must be positive")
    if w > W or h > H:
        raise ValueError(f"target {w}x{h} larger than frame {W}x{H}")
    if sc.n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    start = sc.start if sc.start is not None else (W / 2.0, H / 2.0)
    ren = _Renderer(sc)
    path = _trajectory(start, sc.velocity, sc.n_frames, (w, h), (H, W))

    distractor_paths = []
    for _ in range(sc.distractors):
        # place copies at least 1.5 target sizes away from the start
        for _attempt in range(100):
            dx = ren.rng.uniform(w / 2.0, W - w / 2.0)
            dy = ren.rng.uniform(h / 2.0, H - h / 2.0)
            if abs(dx - start[0]) > 1.5 * w or abs(dy - start[1]) > 1.5 * h:
                break
        angle = ren.rng.uniform(0.0, 2 * np.pi)
        vel = (sc.distractor_speed * np.cos(angle), sc.distractor_speed * np.sin(angle))
        distractor_paths.append(_trajectory((dx, dy), vel, sc.n_frames, (w, h), (H, W)))

    samples = max(sc.blur, 1)
    offsets = np.linspace(-0.5, 0.5, samples) if samples > 1 else np.zeros(1)
    vx, vy = sc.velocity
    frames, truth, occluded = [], [], []
    for t in range(sc.n_frames):
        canvas = ren.background.copy()
        for dpath in distractor_paths:
            ren.paint(canvas, dpath[t], t)
        cx, cy = path[t]
        if samples > 1:
            layer = np.zeros_like(canvas)
            for s in offsets:
                sub = canvas.copy()
                ren.paint(sub, (cx + vx * s, cy + vy * s), t)
                layer += sub
            canvas = layer / samples
        else:
            ren.paint(canvas, (cx, cy), t)

        occ = sc.occlusion is not None and sc.occlusion[0] <= t <= sc.occlusion[1]
        if occ:
            if sc.occluder == "blackout":
                canvas[:] = 0.0
            elif sc.occluder == "block":
                m = 0.25
                x0 = max(0, int(np.floor(cx - w / 2.0 - m * w)))
                x1 = min(W, int(np.ceil(cx + w / 2.0 + m * w)))
                y0 = max(0, int(np.floor(cy - h / 2.0 - m * h)))
                y1 = min(H, int(np.ceil(cy + h / 2.0 + m * h)))
                canvas[y0:y1, x0:x1] = (90.0, 90.0, 90.0)
            else:
                raise ValueError(f"unknown occluder {sc.occluder!r}")
        frames.append(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))
        truth.append(BoundingBox(cx, cy, w, h))
        occluded.append(bool(occ))
    return SyntheticSequence(frames, truth, occluded, sc)


def render_overlay(frame: np.ndarray, boxes) -> np.ndarray:
    """Draw 1-pixel rectangle outlines; later boxes win on shared pixels.

    ``boxes`` is a sequence of ``(BoundingBox, (r, g, b))``. Pixels off the
    outlines are untouched and parts outside the frame are clipped.
    """
    out = np.array(frame, copy=True)
    H, W = out.shape[:2]
    for box, color in boxes:
        x0 = int(round(box.cx - box.w / 2.0))
        x1 = int(round(box.cx + box.w / 2.0)) - 1
        y0 = int(round(box.cy - box.h / 2.0))
        y1 = int(round(box.cy + box.h / 2.0)) - 1
        cx0, cx1 = max(x0, 0), min(x1, W - 1)
        cy0, cy1 = max(y0, 0), min(y1, H - 1)
        if cx0 > cx1 or cy0 > cy1:
            continue
        for y in (y0, y1):
            if 0 <= y < H:
                out[y, cx0 : cx1 + 1] = color
        for x in (x0, x1):
            if 0 <= x < W:
                out[cy0 : cy1 + 1, x] = color
    return out


# --- disk format -----------------------------------------------------------------


def frame_name(index: int) -> str:
    return f"{index + 1:08d}.png"


def write_image(path, rgb: np.ndarray) -> None:
    if not cv2.imwrite(str(path), cv2.cvtColor(np.asarray(rgb, dtype=np.uint8), cv2.COLOR_RGB2BGR)):
        raise OSError(f"could not write {path}")


def read_image(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise OSError(f"could not read image {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def format_groundtruth(truth, occluded=None) -> str:
    lines = []
    for k, box in enumerate(truth):
        fields_ = ",".join(repr(float(v)) for v in box.xywh())
        if occluded is not None and occluded[k]:
            fields_ += ",occ"
        lines.append(fields_)
    return "\n".join(lines) + "\n"


def parse_groundtruth(text: str) -> tuple[list[BoundingBox], list[bool]]:
    boxes, occ = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        flag = parts[-1] == "occ"
        if flag:
            parts = parts[:-1]
        if len(parts) != 4:
            raise ValueError(f"groundtruth line {lineno}: expected x,y,w,h[,occ], got {line!r}")
        boxes.append(BoundingBox.from_xywh(*map(float, parts)))
        occ.append(flag)
    return boxes, occ


def write_sequence(seq: SyntheticSequence, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(seq.frames):
        write_image(d / frame_name(k), frame)
    (d / GROUNDTRUTH).write_text(format_groundtruth(seq.truth, seq.occluded))
    if seq.scenario is not None:
        (d / "scenario.json").write_text(json.dumps(seq.scenario.to_dict(), indent=2) + "\n")
    return d


def list_frames(directory) -> list[Path]:
    d = Path(directory)
    frames = sorted(p for p in d.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not frames:
        raise FileNotFoundError(f"no frames found in {d}")
    return frames


def read_sequence(directory) -> SyntheticSequence:
    d = Path(directory)
    frames = [read_image(p) for p in list_frames(d)]
    gt = d / GROUNDTRUTH
    truth, occ = parse_groundtruth(gt.read_text()) if gt.exists() else ([], [])
    return SyntheticSequence(frames, truth, occ)


def mix(seed: int, count: int, kinds=KINDS, **overrides) -> list[Scenario]:
    """``count`` scenarios cycling through ``kinds`` with seeds derived from ``seed``."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        kind = kinds[k % len(kinds)]
        sub_seed = int(rng.integers(0, 2**31 - 1))
        sc = Scenario.preset(kind, sub_seed, **overrides)
        H, W = sc.frame_size
        w, h = sc.target_size
        start = (float(rng.uniform(w, W - w)), float(rng.uniform(h, H - h)))
        out.append(replace(sc, start=start))
    return out
