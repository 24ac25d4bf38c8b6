"""Per-frame dual-memory tracking pipeline.

One frame: crop the ROI around the previous box, attend with the previous
foreground read, step both controllers, read both memories, subtract the
background read from the foreground template, correlate with the ROI
features, window and upsample the response, then move the box and write
both memories unless the target is judged occluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

import cv2
import numpy as np

from dawn import autodiff as ad
from dawn import backbone as bb
from dawn import memory as mem
from dawn.attention import AttentionOutput, attend
from dawn.boxes import BoundingBox
from dawn.model import Weights
from dawn.ops import ShapeError, hann2d

ABLATIONS = (None, "no-bg-memory", "no-attention")


@dataclass(frozen=True)
class TrackerConfig:
    window_exponent: float = 0.27
    crop_factor: float = 1.32
    roi_factor: float = 2.0
    scale_alpha: float = 0.6
    slots: int = 8
    upsample: int = 16
    occlusion_threshold: float = 0.4
    recovery_threshold: float = 0.6
    peak_history: int = 10
    scale_steps: tuple[float, ...] = (0.964, 1.0, 1.0375)
    scale_penalty: float = 0.9745
    reinit_on_recovery: bool = False
    ablate: str | None = None

    def __post_init__(self):
        positive = {
            "window_exponent": self.window_exponent,
            "crop_factor": self.crop_factor,
            "roi_factor": self.roi_factor,
            "scale_alpha": self.scale_alpha,
            "slots": self.slots,
            "upsample": self.upsample,
            "occlusion_threshold": self.occlusion_threshold,
            "recovery_threshold": self.recovery_threshold,
            "peak_history": self.peak_history,
            "scale_penalty": self.scale_penalty,
        }
        for name, v in positive.items():
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")
        if self.recovery_threshold < self.occlusion_threshold:
            raise ValueError("recovery_threshold must be >= occlusion_threshold")
        if self.ablate not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablate!r}; choose from {ABLATIONS[1:]}")
        if 1.0 not in self.scale_steps:
            raise ValueError("scale_steps must contain 1.0")


@dataclass(frozen=True)
class RoiGeometry:
    """Where an ROI patch sits in the frame."""

    cx: float
    cy: float
    side: float  # frame pixels
    input_size: int  # patch pixels
    stride: int  # patch pixels per feature cell

    def cell_to_frame(self, row: float, col: float, a: int) -> tuple[float, float]:
        centre = (a - 1) / 2.0
        k = self.stride * self.side / self.input_size
        return self.cx + (col - centre) * k, self.cy + (row - centre) * k


@dataclass
class HeatMapResult:
    raw: np.ndarray  # (a, a) correlation response
    windowed: np.ndarray  # (a, a) min-max normalised response times the cosine window
    upsampled: np.ndarray  # (a*u, a*u) bicubic upsampling of ``windowed``
    peak_value: float  # max of ``windowed``
    confidence: float  # max(raw) - mean(raw); zero for a flat response
    peak_cell: tuple[float, float]  # (row, col) in score-map cells, fractional
    location: tuple[float, float]  # (x, y) in frame pixels


@dataclass
class TrackerState:
    box: BoundingBox
    scale: float
    base_size: tuple[float, float]
    template: object  # first-frame target feature, (m, m, c)
    fg_mem: mem.MemoryBlock
    bg_mem: mem.MemoryBlock | None
    fg_lstm: mem.LstmState
    bg_lstm: mem.LstmState | None
    last_fg_read: object
    occluded: bool = False
    frame_index: int = 0
    peaks: tuple[float, ...] = ()
    attention: np.ndarray | None = None
    initial: dict = field(default_factory=dict, repr=False)


@dataclass
class FrameReads:
    attention: AttentionOutput
    fg_lstm: mem.LstmState
    bg_lstm: mem.LstmState | None
    fg: mem.ReadResult
    bg: mem.ReadResult | None
    template: object  # M, residual foreground template
    background: object  # M_back
    suppressed: object  # M - M_back


# --- building blocks -----------------------------------------------------------


def subtract_memories(m_fg, m_bg):
    if ad.value(m_fg).shape != ad.value(m_bg).shape:
        raise ShapeError(f"memory reads differ in shape: {ad.value(m_fg).shape} vs {ad.value(m_bg).shape}")
    return ad.sub(m_fg, m_bg)


def update_scale(s_prev: float, s_new: float, alpha: float = 0.6) -> float:
    if not (s_prev > 0 and s_new > 0):
        raise ValueError(f"scales must be positive, got {s_prev}, {s_new}")
    return (1.0 - alpha) * s_prev + alpha * s_new


def response_confidence(raw: np.ndarray) -> float:
    # max >= mean exactly; the clamp only removes rounding below zero
    return max(0.0, float(raw.max() - raw.mean()))


def window_response(raw: np.ndarray, exponent: float) -> np.ndarray:
    lo, hi = raw.min(), raw.max()
    norm = (raw - lo) / (hi - lo) if hi > lo else np.ones_like(raw)
    return norm * hann2d(raw.shape[0]) ** exponent


def localize(f, m_bar, geometry: RoiGeometry, config: TrackerConfig) -> HeatMapResult:
    """Heat map, cosine-window penalty, upsampling and peak in frame pixels.

    The window is centred on the map centre, which is the previous target
    position because the ROI is cropped around it. Tied maxima of the
    upsampled map are averaged, so a symmetric response peaks exactly at
    the centre.
    """
    raw = ad.value(ad.xcorr(ad.value(f), ad.value(m_bar)))
    a = raw.shape[0]
    windowed = window_response(raw, config.window_exponent)
    u = config.upsample
    up = cv2.resize(windowed, (a * u, a * u), interpolation=cv2.INTER_CUBIC)
    top = up.max()
    rows, cols = np.nonzero(up >= top - 1e-9 * max(abs(top), 1e-300))
    row = (rows.mean() + 0.5) / u - 0.5
    col = (cols.mean() + 0.5) / u - 0.5
    return HeatMapResult(
        raw=raw,
        windowed=windowed,
        upsampled=up,
        peak_value=float(windowed.max()),
        confidence=response_confidence(raw),
        peak_cell=(row, col),
        location=geometry.cell_to_frame(row, col, a),
    )


def detect_occlusion(result: HeatMapResult, state: TrackerState, config: TrackerConfig) -> bool:
    """Hysteresis on the response confidence against recent visible frames.

    Enters occlusion below ``occlusion_threshold`` times the median of the
    last ``peak_history`` visible confidences, leaves it at or above
    ``recovery_threshold`` times that median. Occluded frames never enter
    the history, so a long occlusion cannot drag the reference down.
    """
    history = state.peaks[-config.peak_history :]
    if not history:
        return False
    ref = float(np.median(history))
    if state.occluded:
        return not result.confidence >= config.recovery_threshold * ref
    return result.confidence < config.occlusion_threshold * ref


def _box_in_roi(box: BoundingBox, config: TrackerConfig, backbone: bb.BackboneConfig) -> BoundingBox:
    k = backbone.roi_size / bb.roi_side(box, config.crop_factor, config.roi_factor)
    c = backbone.roi_size / 2.0
    return BoundingBox(c, c, box.w * k, box.h * k)


def target_feature(frame, box, weights: Weights, config: TrackerConfig):
    b = weights.spec.backbone
    patch = bb.crop_target(frame, box, b, config.crop_factor)
    return bb.extract(patch, weights.params, b)


def background_feature(frame, box, weights: Weights, config: TrackerConfig):
    """Masked-ROI feature pooled from n x n down to the m x m template size."""
    b = weights.spec.backbone
    roi = bb.crop_roi(frame, box, b, config.crop_factor, config.roi_factor)
    masked = bb.mask_background(roi, _box_in_roi(box, config, b), bb.mean_color(frame))
    feat = bb.extract(masked, weights.params, b)
    return ad.avgpool(feat, b.a, 1)


def roi_features(frame, box, weights: Weights, config: TrackerConfig, scale: float = 1.0):
    b = weights.spec.backbone
    side = bb.roi_side(box, config.crop_factor, config.roi_factor) * scale
    patch = bb.crop_square(frame, (box.cx, box.cy), side, b.roi_size)
    geom = RoiGeometry(box.cx, box.cy, side, b.roi_size, b.total_stride)
    return bb.extract(patch, weights.params, b), geom


def read_memories(f, state: TrackerState, weights: Weights, config: TrackerConfig, training: bool = False, rng=None) -> FrameReads:
    p = weights.params
    att = attend(f, state.last_fg_read, uniform=config.ablate == "no-attention")
    fg_lstm = mem.lstm_step(state.fg_lstm, att.attended, p, "fg.", training, rng)
    fg = mem.read(state.fg_mem, fg_lstm.h, p, "fg.")
    template = mem.residual_template(state.template, fg.template, fg_lstm.h, p, "fg.")
    if config.ablate == "no-bg-memory":
        bg_lstm, bg = None, None
        background = np.zeros(ad.value(template).shape)
    else:
        bg_lstm = mem.lstm_step(state.bg_lstm, ad.mean(att.pooled, axis=(0, 1)), p, "bg.", training, rng)
        bg = mem.read(state.bg_mem, bg_lstm.h, p, "bg.")
        background = bg.template
    return FrameReads(att, fg_lstm, bg_lstm, fg, bg, template, background, subtract_memories(template, background))


def write_memories(frame, box: BoundingBox, reads: FrameReads, weights: Weights, config: TrackerConfig):
    p = weights.params
    fg_mem = mem.write(reads.fg.block, reads.fg_lstm.h, target_feature(frame, box, weights, config), reads.fg.weights, p, "fg.")
    bg_mem = None
    if reads.bg is not None:
        bg_mem = mem.write(
            reads.bg.block, reads.bg_lstm.h, background_feature(frame, box, weights, config), reads.bg.weights, p, "bg."
        )
    return fg_mem, bg_mem


# --- tracking -------------------------------------------------------------------


def _check_box(frame, box: BoundingBox):
    if not (box.w > 0 and box.h > 0) or not all(map(math.isfinite, (box.cx, box.cy, box.w, box.h))):
        raise ValueError(f"degenerate box {box}")
    h, w = np.asarray(frame).shape[:2]
    if not (0 <= box.cx <= w and 0 <= box.cy <= h):
        raise ValueError(f"box centre ({box.cx}, {box.cy}) lies outside the {w}x{h} frame")


def init(frame, box: BoundingBox, weights: Weights, config: TrackerConfig | None = None) -> TrackerState:
    config = config or TrackerConfig()
    _check_box(frame, box)
    p = weights.params
    template = target_feature(frame, box, weights, config)
    fg_mem = mem.MemoryBlock.filled(template, config.slots)
    fg_lstm = mem.controller_init(template, p, "fg.")
    bg_mem = bg_lstm = None
    if config.ablate != "no-bg-memory":
        bg_mem = mem.MemoryBlock.filled(background_feature(frame, box, weights, config), config.slots)
        bg_lstm = mem.controller_init(template, p, "bg.")
    return TrackerState(
        box=box,
        scale=1.0,
        base_size=(box.w, box.h),
        template=template,
        fg_mem=fg_mem,
        bg_mem=bg_mem,
        fg_lstm=fg_lstm,
        bg_lstm=bg_lstm,
        last_fg_read=template,
        initial={"fg_mem": fg_mem, "fg_lstm": fg_lstm, "bg_lstm": bg_lstm},
    )


def step(state: TrackerState, frame, weights: Weights, config: TrackerConfig | None = None):
    """Track one frame. Returns ``(new_state, box, heat_map)``."""
    config = config or TrackerConfig()
    scales = config.scale_steps
    unit = scales.index(1.0)
    feats = [roi_features(frame, state.box, weights, config, s) for s in scales]
    reads = read_memories(feats[unit][0], state, weights, config)

    m_bar = ad.value(reads.suppressed)
    scores = []
    for k, (f, _) in enumerate(feats):
        conf = response_confidence(ad.xcorr(f, m_bar))
        scores.append(conf if k == unit else conf * config.scale_penalty)
    best = int(np.argmax(scores))
    result = localize(feats[best][0], m_bar, feats[best][1], config)

    occluded = detect_occlusion(result, state, config)
    new = replace(
        state,
        fg_lstm=reads.fg_lstm,
        bg_lstm=reads.bg_lstm,
        last_fg_read=ad.value(reads.fg.template),
        occluded=occluded,
        frame_index=state.frame_index + 1,
        attention=ad.value(reads.attention.scores),
    )
    if occluded:
        return new, state.box, result

    if state.occluded and config.reinit_on_recovery:
        init_state = state.initial
        new = replace(new, fg_lstm=init_state["fg_lstm"], bg_lstm=init_state["bg_lstm"])
        reads = replace(reads, fg=replace(reads.fg, block=init_state["fg_mem"]))

    scale = update_scale(state.scale, state.scale * scales[best], config.scale_alpha)
    h, w = np.asarray(frame).shape[:2]
    cx = min(max(result.location[0], 0.0), float(w))
    cy = min(max(result.location[1], 0.0), float(h))
    w0, h0 = state.base_size
    box = BoundingBox(cx, cy, w0 * scale, h0 * scale)
    fg_mem, bg_mem = write_memories(frame, box, reads, weights, config)
    new = replace(
        new,
        box=box,
        scale=scale,
        fg_mem=fg_mem,
        bg_mem=bg_mem,
        peaks=(state.peaks + (result.confidence,))[-config.peak_history :],
    )
    return new, box, result


def track(frames: Iterable, init_box: BoundingBox, weights: Weights, config: TrackerConfig | None = None) -> Iterator:
    """Yield ``(box, heat_map_or_None, state)`` per frame; frame 0 is the init frame."""
    config = config or TrackerConfig()
    it = iter(frames)
    first = next(it)
    state = init(first, init_box, weights, config)
    yield init_box, None, state
    for frame in it:
        state, box, result = step(state, frame, weights, config)
        yield box, result, state
