"""Dense feature-volume kernels.

A feature volume is a float64 array of shape (height, width, channels); score
maps are 2-D arrays. Everything here is valid-mode (no padding) and pure.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

COSINE_EPS = 1e-8


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor3(x, name: str = "tensor") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or min(x.shape) < 1:
        raise ShapeError(f"{name} must be a non-empty (h, w, c) volume, got shape {x.shape}")
    return x


def windows(x: np.ndarray, kh: int, kw: int, stride: int = 1) -> np.ndarray:
    """Strided view of all kh x kw windows: (oh, ow, c, kh, kw)."""
    view = sliding_window_view(x, (kh, kw), axis=(0, 1))
    return view[::stride, ::stride]


def xcorr_valid(f, m) -> np.ndarray:
    """Valid cross-correlation of a search volume with a template volume.

    ``out[i, j] = sum_{s,t,k} f[i+s, j+t, k] * m[s, t, k]``
    """
    f = as_tensor3(f, "search volume")
    m = as_tensor3(m, "template")
    if m.shape[0] > f.shape[0] or m.shape[1] > f.shape[1] or m.shape[2] != f.shape[2]:
        raise ShapeError(
            f"cannot correlate search volume {f.shape} with template {m.shape}"
        )
    win = windows(f, m.shape[0], m.shape[1])
    return np.einsum("ijkst,stk->ij", win, m, optimize=True)


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """Multi-channel valid convolution (correlation) with kernel (kh, kw, cin, cout)."""
    x = as_tensor3(x, "input")
    if w.ndim != 4 or w.shape[2] != x.shape[2]:
        raise ShapeError(f"kernel {w.shape} does not match input {x.shape}")
    kh, kw = w.shape[:2]
    if kh > x.shape[0] or kw > x.shape[1]:
        raise ShapeError(f"kernel {w.shape} larger than input {x.shape}")
    win = windows(x, kh, kw, stride)
    oh, ow = win.shape[:2]
    cols = win.transpose(0, 1, 3, 4, 2).reshape(oh * ow, -1)
    return (cols @ w.reshape(-1, w.shape[3])).reshape(oh, ow, w.shape[3])


def avgpool(f, window: int, stride: int = 1) -> np.ndarray:
    """Per-channel mean over each window x window patch."""
    f = as_tensor3(f)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if window < 1 or window > min(f.shape[:2]):
        raise ShapeError(f"pooling window {window} does not fit input {f.shape}")
    return windows(f, window, window, stride).mean(axis=(3, 4))


def maxpool(f, window: int, stride: int = 1) -> np.ndarray:
    f = as_tensor3(f)
    if window > min(f.shape[:2]):
        raise ShapeError(f"pooling window {window} does not fit input {f.shape}")
    return windows(f, window, window, stride).max(axis=(3, 4))


def softmax2d(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    e = np.exp(r - r.max())
    return e / e.sum()


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def cosine_sim(u, v, eps: float = COSINE_EPS) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"vector lengths differ: {u.size} vs {v.size}")
    return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v) + eps))


def hann2d(size: int) -> np.ndarray:
    """Strictly positive 2-D Hann window peaking at the map centre."""
    h = np.hanning(size + 2)[1:-1]
    return np.outer(h, h)
