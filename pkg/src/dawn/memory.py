"""External slot memory and its layer-normalised LSTM controllers.

Parameter names are prefixed per controller (``fg.`` or ``bg.``):

    {p}lstm.wx, {p}lstm.wh, {p}lstm.b          gate projections, order i, f, o, g
    {p}lstm.ln_x.{g,b}, {p}lstm.ln_h.{g,b}      layer norm on the two pre-activations
    {p}lstm.ln_c.{g,b}                          layer norm on the cell before output
    {p}init.{wh,bh,wc,bc}                       first-frame state from the pooled target
    {p}read.{w,b}                               read key projection
    {p}write.{w,b}                              3-way write gate: skip / read slots / LRU slot
    fg.residual.{w,b}                           per-channel residual template gate
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from dawn import autodiff as ad
from dawn.ops import COSINE_EPS, ShapeError

DROPOUT_RATE = 0.2


@dataclass
class LstmState:
    h: object
    c: object


@dataclass
class MemoryBlock:
    """K templates of shape (m, m, c) with pooled keys and access times.

    ``recency[k]`` is the clock value of the last access to slot k; the
    least recently used slot is ``argmin(recency)``.
    """

    slots: object  # (K, m, m, c)
    keys: object  # (K, c)
    recency: np.ndarray
    clock: int = 0

    @classmethod
    def filled(cls, template, k: int) -> "MemoryBlock":
        slots = ad.stack([template] * k)
        return cls(slots, slot_keys(slots), np.arange(k, dtype=np.int64) - k, 0)

    @property
    def size(self) -> int:
        return ad.value(self.slots).shape[0]

    def lru(self) -> int:
        return int(np.argmin(self.recency))

    def touched(self, slot: int) -> "MemoryBlock":
        recency = self.recency.copy()
        recency[slot] = self.clock
        return replace(self, recency=recency, clock=self.clock + 1)

    def detached(self) -> "MemoryBlock":
        return MemoryBlock(ad.value(self.slots), ad.value(self.keys), self.recency.copy(), self.clock)


@dataclass
class ReadResult:
    template: object  # (m, m, c)
    weights: object  # (K,)
    key: object  # read key r_t, (c,)
    block: MemoryBlock  # same slots, recency refreshed for the strongest slot


def slot_keys(slots):
    return ad.mean(slots, axis=(1, 2))


def init_controller(prefix: str, input_dim: int, channels: int, hidden: int, rng: np.random.Generator, residual: bool = False):
    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    d = hidden
    p = {
        f"{prefix}lstm.wx": uniform((4 * d, input_dim), input_dim),
        f"{prefix}lstm.wh": uniform((4 * d, d), d),
        f"{prefix}lstm.b": np.zeros(4 * d),
        f"{prefix}lstm.ln_x.g": np.ones(4 * d),
        f"{prefix}lstm.ln_x.b": np.zeros(4 * d),
        f"{prefix}lstm.ln_h.g": np.ones(4 * d),
        f"{prefix}lstm.ln_h.b": np.zeros(4 * d),
        f"{prefix}lstm.ln_c.g": np.ones(d),
        f"{prefix}lstm.ln_c.b": np.zeros(d),
        f"{prefix}init.wh": uniform((d, channels), channels),
        f"{prefix}init.bh": np.zeros(d),
        f"{prefix}init.wc": uniform((d, channels), channels),
        f"{prefix}init.bc": np.zeros(d),
        f"{prefix}read.w": uniform((channels, d), d),
        f"{prefix}read.b": np.zeros(channels),
        f"{prefix}write.w": uniform((3, d), d),
        f"{prefix}write.b": np.zeros(3),
    }
    if residual:
        p[f"{prefix}residual.w"] = uniform((channels, d), d)
        p[f"{prefix}residual.b"] = np.zeros(channels)
    return p


def controller_init(target_feature, params, prefix: str) -> LstmState:
    pooled = ad.mean(target_feature, axis=(0, 1))
    h = ad.tanh(ad.add(ad.matmul(params[f"{prefix}init.wh"], pooled), params[f"{prefix}init.bh"]))
    c = ad.tanh(ad.add(ad.matmul(params[f"{prefix}init.wc"], pooled), params[f"{prefix}init.bc"]))
    return LstmState(h, c)


def lstm_step(state: LstmState, x, params, prefix: str, training: bool = False, rng: np.random.Generator | None = None) -> LstmState:
    """One layer-normalised LSTM update; ``x`` is flattened in (h, w, c) order."""
    x = ad.reshape(x, (-1,))
    wx = params[f"{prefix}lstm.wx"]
    if ad.value(wx).shape[1] != ad.value(x).shape[0]:
        raise ShapeError(f"controller {prefix!r} expects input of size {ad.value(wx).shape[1]}, got {ad.value(x).shape[0]}")
    if training and DROPOUT_RATE > 0:
        if rng is None:
            raise ValueError("training mode needs an rng for dropout")
        keep = rng.random(ad.value(x).shape) >= DROPOUT_RATE
        x = ad.mul(x, keep / (1.0 - DROPOUT_RATE))
    d = ad.value(state.h).shape[0]
    gx = ad.layer_norm(ad.matmul(wx, x), params[f"{prefix}lstm.ln_x.g"], params[f"{prefix}lstm.ln_x.b"])
    gh = ad.layer_norm(
        ad.matmul(params[f"{prefix}lstm.wh"], state.h), params[f"{prefix}lstm.ln_h.g"], params[f"{prefix}lstm.ln_h.b"]
    )
    z = ad.add(ad.add(gx, gh), params[f"{prefix}lstm.b"])
    i = ad.sigmoid(ad.getitem(z, slice(0, d)))
    f = ad.sigmoid(ad.getitem(z, slice(d, 2 * d)))
    o = ad.sigmoid(ad.getitem(z, slice(2 * d, 3 * d)))
    g = ad.tanh(ad.getitem(z, slice(3 * d, 4 * d)))
    c = ad.add(ad.mul(f, state.c), ad.mul(i, g))
    h = ad.mul(o, ad.tanh(ad.layer_norm(c, params[f"{prefix}lstm.ln_c.g"], params[f"{prefix}lstm.ln_c.b"])))
    return LstmState(h, c)


def read_key(h, params, prefix: str):
    return ad.add(ad.matmul(params[f"{prefix}read.w"], h), params[f"{prefix}read.b"])


def read_weights(block: MemoryBlock, key):
    """Softmax over the cosine similarities between ``key`` and every slot key."""
    keys = block.keys
    dots = ad.matmul(keys, key)
    key_norms = ad.sqrt(ad.sum_(ad.mul(keys, keys), axis=1))
    norm = ad.sqrt(ad.sum_(ad.mul(key, key)))
    sims = ad.div(dots, ad.add(ad.mul(key_norms, norm), COSINE_EPS))
    return ad.softmax(sims)


def read(block: MemoryBlock, h, params, prefix: str) -> ReadResult:
    key = read_key(h, params, prefix)
    w = read_weights(block, key)
    template = ad.sum_(ad.mul(ad.reshape(w, (-1, 1, 1, 1)), block.slots), axis=0)
    strongest = int(np.argmax(ad.value(w)))
    return ReadResult(template, w, key, block.touched(strongest))


def residual_template(initial, retrieved, h, params, prefix: str = "fg."):
    """initial + g * retrieved with a per-channel sigmoid gate g from h."""
    if ad.value(initial).shape != ad.value(retrieved).shape:
        raise ShapeError(f"template shapes differ: {ad.value(initial).shape} vs {ad.value(retrieved).shape}")
    gate = ad.sigmoid(ad.add(ad.matmul(params[f"{prefix}residual.w"], h), params[f"{prefix}residual.b"]))
    return ad.add(initial, ad.mul(gate, retrieved))


def write_gate(h, params, prefix: str):
    """Softmax over (skip, write to read slots, write to LRU slot)."""
    return ad.softmax(ad.add(ad.matmul(params[f"{prefix}write.w"], h), params[f"{prefix}write.b"]))


def write_weights(block: MemoryBlock, h, weights_read, params, prefix: str):
    gate = write_gate(h, params, prefix)
    lru = np.zeros(block.size)
    lru[block.lru()] = 1.0
    return ad.add(ad.mul(ad.getitem(gate, 1), weights_read), ad.mul(ad.getitem(gate, 2), lru))


def write(block: MemoryBlock, h, feature, weights_read, params, prefix: str) -> MemoryBlock:
    """Convex slotwise update ``M_k <- (1 - w_k) M_k + w_k F``."""
    if ad.value(feature).shape != ad.value(block.slots).shape[1:]:
        raise ShapeError(f"feature {ad.value(feature).shape} does not match slots {ad.value(block.slots).shape[1:]}")
    w = write_weights(block, h, weights_read, params, prefix)
    return apply_write(block, w, feature)


def apply_write(block: MemoryBlock, w, feature) -> MemoryBlock:
    w4 = ad.reshape(w, (-1, 1, 1, 1))
    new = ad.reshape(feature, (1,) + ad.value(feature).shape)
    slots = ad.add(ad.mul(ad.sub(1.0, w4), block.slots), ad.mul(w4, new))
    old_v, new_v = ad.value(block.slots), ad.value(new)
    slots = ad.clamp_rounding(slots, np.minimum(old_v, new_v), np.maximum(old_v, new_v))
    touched = int(np.argmax(ad.value(w)))
    out = MemoryBlock(slots, slot_keys(slots), block.recency, block.clock)
    return out.touched(touched)
