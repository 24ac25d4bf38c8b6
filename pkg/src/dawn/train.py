"""Offline training of the toy model on synthetic snippets.

A snippet is a few consecutive frames with ground truth. The first frame
initialises the tracker state; every later frame is scored with a balanced
logistic loss on its response map and then written to both memories at the
true box (teacher forcing). Gradients are exact through the whole snippet,
including memory writes; nothing crosses snippet boundaries.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from dawn import autodiff as ad
from dawn import synth
from dawn import tracker as trk
from dawn.boxes import BoundingBox
from dawn.model import ModelSpec, Weights, init_weights

PARAM_GROUPS = {
    "backbone": ("backbone.",),
    "lstm": ("fg.lstm.", "bg.lstm."),
    "controller_init": ("fg.init.", "bg.init."),
    "read_key": ("fg.read.", "bg.read."),
    "write_gate": ("fg.write.", "bg.write."),
    "residual_gate": ("fg.residual.",),
    "head": ("head.",),
}


def group_of(name: str) -> str:
    for group, prefixes in PARAM_GROUPS.items():
        if name.startswith(prefixes):
            return group
    raise KeyError(name)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


@dataclass
class TrainConfig:
    preset: str = "toy"
    lr: float = 1e-4
    decay: float = 0.98
    decay_every: int = 10_000
    iterations: int = 500
    batch_size: int = 1
    snippet_length: int = 3
    n_snippets: int = 20
    kinds: tuple[str, ...] = synth.KINDS
    jitter_cells: int = 2
    seed: int = 7
    init_seed: int = 0
    dropout: bool = True
    divergence_limit: float = 1e6

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.snippet_length < 2:
            raise ValueError("snippet_length must be >= 2")
        self.kinds = tuple(self.kinds)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        data = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown train config fields: {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Snippet:
    frames: list[np.ndarray]
    truth: list[BoundingBox]


def make_snippets(config: TrainConfig) -> list[Snippet]:
    scenarios = synth.mix(config.seed, config.n_snippets, config.kinds, n_frames=config.snippet_length)
    out = []
    for sc in scenarios:
        seq = synth.generate(sc)
        out.append(Snippet(seq.frames, seq.truth))
    return out


def label_mask(size: int, cell: tuple[int, int], radius: float = 1.0) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size]
    return (rows - cell[0]) ** 2 + (cols - cell[1]) ** 2 <= radius * radius


def heatmap_loss(h, truth_cell: tuple[int, int], radius: float = 1.0):
    """Class-balanced logistic loss; cells within ``radius`` of the truth are positive."""
    size = ad.value(h).shape[0]
    r, c = truth_cell
    if not (0 <= r < size and 0 <= c < size):
        raise ValueError(f"truth cell {truth_cell} outside the {size}x{size} map")
    pos = label_mask(size, truth_cell, radius)
    neg = ~pos
    weight = np.where(pos, 0.5 / pos.sum(), 0.5 / max(neg.sum(), 1))
    sign = np.where(pos, -1.0, 1.0)
    return ad.sum_(ad.mul(weight, ad.softplus(ad.mul(sign, h))))


def truth_cell(geom: trk.RoiGeometry, box: BoundingBox, a: int) -> tuple[int, int]:
    k = geom.stride * geom.side / geom.input_size
    centre = (a - 1) / 2.0
    row = int(round((box.cy - geom.cy) / k + centre))
    col = int(round((box.cx - geom.cx) / k + centre))
    return min(max(row, 0), a - 1), min(max(col, 0), a - 1)


def snippet_loss(snippet: Snippet, weights: Weights, tconfig: trk.TrackerConfig, jitter=None, training: bool = False, rng=None):
    """Mean response loss over frames 1..L-1 of a snippet.

    ``jitter[t-1]`` is a (rows, cols) offset in score cells applied to the
    ROI centre of frame t so the target is not always at the map centre.
    """
    spec = weights.spec
    b = spec.backbone
    p = weights.params
    state = trk.init(snippet.frames[0], snippet.truth[0], weights, tconfig)
    losses = []
    for t in range(1, len(snippet.frames)):
        frame, box = snippet.frames[t], snippet.truth[t]
        dr, dc = (0, 0) if jitter is None else jitter[t - 1]
        k = b.total_stride * trk.bb.roi_side(box, tconfig.crop_factor, tconfig.roi_factor) / b.roi_size
        roi_box = box.moved(box.cx - dc * k, box.cy - dr * k)
        f, geom = trk.roi_features(frame, roi_box, weights, tconfig)
        reads = trk.read_memories(f, state, weights, tconfig, training, rng)
        response = ad.add(ad.mul(ad.xcorr(f, reads.suppressed), p["head.gain"]), p["head.bias"])
        losses.append(heatmap_loss(response, truth_cell(geom, box, b.a)))
        fg_mem, bg_mem = trk.write_memories(frame, box, reads, weights, tconfig)
        state = replace(
            state,
            box=box,
            fg_lstm=reads.fg_lstm,
            bg_lstm=reads.bg_lstm,
            fg_mem=fg_mem,
            bg_mem=bg_mem,
            last_fg_read=reads.fg.template,
        )
    total = losses[0]
    for extra in losses[1:]:
        total = ad.add(total, extra)
    return ad.mul(total, 1.0 / len(losses))


def backward(snippet: Snippet, weights: Weights, tconfig: trk.TrackerConfig | None = None, jitter=None, training: bool = False, rng=None):
    """Loss and exact gradients for every parameter of ``weights``."""
    tconfig = tconfig or trk.TrackerConfig()
    leaves = {k: ad.Var(v, name=k) for k, v in weights.params.items()}
    loss = snippet_loss(snippet, Weights(weights.spec, leaves), tconfig, jitter, training, rng)
    if not isinstance(loss, ad.Var):
        raise RuntimeError("loss does not depend on any parameter")
    loss.backward()
    grads = {}
    for k, leaf in leaves.items():
        g = np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {k}")
        grads[k] = g
    return float(loss.value), grads


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m.get(k, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(k, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            params[k] = params[k] - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def fit(config: TrainConfig, weights: Weights | None = None, snippets: list[Snippet] | None = None, log=None):
    """Adam on the snippet set. Returns ``(weights, loss_trace)``."""
    spec = ModelSpec.preset(config.preset)
    weights = (weights or init_weights(spec, config.init_seed)).copy()
    snippets = snippets if snippets is not None else make_snippets(config)
    tconfig = trk.TrackerConfig()
    rng = np.random.default_rng(config.seed)
    opt = Adam(config.lr)
    a = spec.backbone.a
    reach = min(config.jitter_cells, (a - 1) // 2 - 1)
    trace: list[float] = []
    for it in range(config.iterations):
        lr = config.lr * config.decay ** (it // config.decay_every)
        total_loss, total_grads = 0.0, {}
        for b in range(config.batch_size):
            snip = snippets[(it * config.batch_size + b) % len(snippets)]
            jitter = [tuple(int(j) for j in rng.integers(-reach, reach + 1, 2)) for _ in snip.frames[1:]]
            loss, grads = backward(snip, weights, tconfig, jitter, training=config.dropout, rng=rng)
            total_loss += loss / config.batch_size
            for k, g in grads.items():
                total_grads[k] = total_grads.get(k, 0.0) + g / config.batch_size
        trace.append(total_loss)
        if not math.isfinite(total_loss) or total_loss > config.divergence_limit:
            raise TrainingDiverged(f"loss {total_loss} at iteration {it}", trace)
        opt.update(weights.params, total_grads, lr)
        if log is not None:
            log(it, total_loss)
    return weights, trace


def smoothed(trace: list[float], window: int = 20) -> tuple[float, float]:
    """Mean of the first and of the last ``window`` losses."""
    window = max(1, min(window, len(trace)))
    return float(np.mean(trace[:window])), float(np.mean(trace[-window:]))
