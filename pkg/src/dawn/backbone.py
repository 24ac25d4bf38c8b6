"""Patch sampling and the shared fully convolutional feature extractor.

The ROI, foreground and background branches all run :func:`extract` with
the same weight dictionary; only the input patch differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from dawn import autodiff as ad
from dawn.ops import ShapeError


@dataclass(frozen=True)
class Layer:
    kind: str  # "conv" or "maxpool"
    kernel: int
    stride: int = 1
    out_channels: int = 0
    relu: bool = True


@dataclass(frozen=True)
class BackboneConfig:
    name: str
    layers: tuple[Layer, ...]
    roi_size: int
    target_size: int
    in_channels: int = 3

    def output_size(self, size: int) -> int:
        for layer in self.layers:
            size = (size - layer.kernel) // layer.stride + 1
        return size

    @property
    def n(self) -> int:
        return self.output_size(self.roi_size)

    @property
    def m(self) -> int:
        return self.output_size(self.target_size)

    @property
    def a(self) -> int:
        return self.n - self.m + 1

    @property
    def channels(self) -> int:
        return [l.out_channels for l in self.layers if l.kind == "conv"][-1]

    @property
    def total_stride(self) -> int:
        return math.prod(l.stride for l in self.layers)

    def conv_layers(self):
        cin = self.in_channels
        for idx, layer in enumerate(self.layers):
            if layer.kind == "conv":
                yield idx, layer, cin
                cin = layer.out_channels


# Layer geometry of the SiamFC AlexNet variant (no channel groups).
PAPER = BackboneConfig(
    name="paper",
    layers=(
        Layer("conv", 11, 2, 96),
        Layer("maxpool", 3, 2),
        Layer("conv", 5, 1, 256),
        Layer("maxpool", 3, 2),
        Layer("conv", 3, 1, 384),
        Layer("conv", 3, 1, 384),
        Layer("conv", 3, 1, 256, relu=False),
    ),
    roi_size=255,
    target_size=127,
)

TOY = BackboneConfig(
    name="toy",
    layers=(
        Layer("conv", 5, 2, 8),
        Layer("conv", 3, 1, 16),
        Layer("conv", 3, 1, 16, relu=False),
    ),
    roi_size=48,
    target_size=24,
)

# Smallest useful geometry, used for finite-difference gradient checks:
# n = 4, m = 2, c = 3.
MICRO = BackboneConfig(
    name="micro",
    layers=(
        Layer("conv", 3, 1, 4),
        Layer("conv", 3, 1, 3, relu=False),
    ),
    roi_size=8,
    target_size=6,
)

PRESETS = {cfg.name: cfg for cfg in (PAPER, TOY, MICRO)}


def init_backbone(config: BackboneConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform kernels, zero biases."""
    params = {}
    for idx, layer, cin in config.conv_layers():
        fan_in = layer.kernel * layer.kernel * cin
        bound = math.sqrt(6.0 / fan_in)
        params[f"backbone.conv{idx}.w"] = rng.uniform(
            -bound, bound, (layer.kernel, layer.kernel, cin, layer.out_channels)
        )
        params[f"backbone.conv{idx}.b"] = np.zeros(layer.out_channels)
    return params


def extract(patch, params, config: BackboneConfig):
    """Forward pass of the shared extractor on one (s, s, 3) patch."""
    size = ad.value(patch).shape[0]
    if size not in (config.roi_size, config.target_size) or ad.value(patch).shape[:2] != (size, size):
        raise ShapeError(
            f"patch {ad.value(patch).shape} matches neither ROI ({config.roi_size}) "
            f"nor target ({config.target_size}) input size"
        )
    x = patch
    for idx, layer in enumerate(config.layers):
        if layer.kind == "maxpool":
            x = ad.maxpool(x, layer.kernel, layer.stride)
            continue
        x = ad.conv2d(x, params[f"backbone.conv{idx}.w"], layer.stride)
        x = ad.add(x, params[f"backbone.conv{idx}.b"])
        if layer.relu:
            x = ad.relu(x)
    return x


# --- patches -----------------------------------------------------------------


def to_float(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.dtype == np.uint8:
        return frame.astype(np.float64) / 255.0
    return frame.astype(np.float64)


def mean_color(frame: np.ndarray) -> np.ndarray:
    return to_float(frame).reshape(-1, frame.shape[-1]).mean(axis=0)


def crop_square(frame, center: tuple[float, float], side: float, out_size: int) -> np.ndarray:
    """Axis-aligned square crop resized bilinearly to ``out_size``.

    Pixels outside the frame are filled with the frame mean colour. Pixel
    (row i, col j) covers [j, j+1) x [i, i+1), so its centre is at j + 0.5.
    """
    if not side > 0:
        raise ValueError(f"crop side must be positive, got {side}")
    img = to_float(frame)
    scale = out_size / side
    cx, cy = center
    # output pixel u samples source index (u + 0.5) / scale + cx - side / 2 - 0.5
    warp = np.array(
        [
            [1.0 / scale, 0.0, cx - side / 2.0 + 0.5 / scale - 0.5],
            [0.0, 1.0 / scale, cy - side / 2.0 + 0.5 / scale - 0.5],
        ]
    )
    fill = tuple(float(v) for v in mean_color(img))
    return cv2.warpAffine(
        img,
        warp,
        (out_size, out_size),
        flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=fill,
    )


def target_side(box, crop_factor: float = 1.32) -> float:
    if not (box.w > 0 and box.h > 0):
        raise ValueError(f"degenerate box {box}")
    return crop_factor * math.sqrt(box.w * box.h)


def roi_side(box, crop_factor: float = 1.32, roi_factor: float = 2.0) -> float:
    return roi_factor * target_side(box, crop_factor)


def crop_target(frame, box, config: BackboneConfig, crop_factor: float = 1.32, scale: float = 1.0):
    return crop_square(frame, (box.cx, box.cy), target_side(box, crop_factor) * scale, config.target_size)


def crop_roi(frame, box, config: BackboneConfig, crop_factor: float = 1.32, roi_factor: float = 2.0, scale: float = 1.0):
    side = roi_side(box, crop_factor, roi_factor) * scale
    return crop_square(frame, (box.cx, box.cy), side, config.roi_size)


def mask_background(roi: np.ndarray, box, fill) -> np.ndarray:
    """Copy of ``roi`` with the box interior painted ``fill``.

    ``box`` is in ROI pixel coordinates; the part outside the patch is ignored.
    """
    out = np.array(roi, dtype=np.float64, copy=True)
    h, w = out.shape[:2]
    x0 = max(0, int(math.floor(box.cx - box.w / 2.0 + 0.5)))
    y0 = max(0, int(math.floor(box.cy - box.h / 2.0 + 0.5)))
    x1 = min(w, int(math.floor(box.cx + box.w / 2.0 + 0.5)))
    y1 = min(h, int(math.floor(box.cy + box.h / 2.0 + 0.5)))
    if x1 > x0 and y1 > y0:
        out[y0:y1, x0:x1] = np.asarray(fill, dtype=np.float64)
    return out
