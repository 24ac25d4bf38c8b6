"""Fast oracle checks runnable from an installed package, without pytest.

Each check compares a production kernel against an independent slow
reference (explicit loops, hand formulas or central differences) and
returns the worst observed error next to its bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from dawn import autodiff as ad
from dawn import memory as mem
from dawn import ops


@dataclass
class Check:
    name: str
    error: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.bound)


def naive_xcorr(f: np.ndarray, m: np.ndarray) -> np.ndarray:
    n1, n2, c = f.shape
    m1, m2, _ = m.shape
    out = np.zeros((n1 - m1 + 1, n2 - m2 + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            acc = 0.0
            for s in range(m1):
                for t in range(m2):
                    for k in range(c):
                        acc += f[i + s, j + t, k] * m[s, t, k]
            out[i, j] = acc
    return out


def naive_avgpool(f: np.ndarray, window: int) -> np.ndarray:
    a = f.shape[0] - window + 1
    b = f.shape[1] - window + 1
    out = np.zeros((a, b, f.shape[2]))
    for i in range(a):
        for j in range(b):
            out[i, j] = f[i : i + window, j : j + window].sum(axis=(0, 1)) / (window * window)
    return out


def check_xcorr(rng, trials: int = 100) -> Check:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(3, 9))
        m = int(rng.integers(1, n + 1))
        c = int(rng.integers(1, 5))
        f = rng.normal(size=(n, n, c))
        t = rng.normal(size=(m, m, c))
        worst = max(worst, float(np.max(np.abs(ops.xcorr_valid(f, t) - naive_xcorr(f, t)))))
    return Check("xcorr_valid vs loop oracle", worst, 1e-10)


def check_avgpool(rng, trials: int = 50) -> Check:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 9))
        w = int(rng.integers(1, n + 1))
        f = rng.normal(size=(n, n, 3))
        worst = max(worst, float(np.max(np.abs(ops.avgpool(f, w, 1) - naive_avgpool(f, w)))))
    return Check("avgpool vs loop oracle", worst, 1e-9)


def check_softmax(rng, trials: int = 50) -> Check:
    worst = 0.0
    for _ in range(trials):
        x = rng.normal(scale=5.0, size=(5, 5))
        e = np.exp(x)
        worst = max(worst, float(np.max(np.abs(ops.softmax2d(x) - e / e.sum()))))
    return Check("softmax2d vs exp/sum", worst, 1e-9)


def check_write_convexity(rng, trials: int = 200) -> Check:
    """Largest excursion of a written slot outside [min(old, new), max(old, new)]."""
    worst = 0.0
    for _ in range(trials):
        K = int(rng.integers(1, 5))
        block = mem.MemoryBlock.filled(rng.normal(size=(2, 2, 3)), K)
        w = rng.dirichlet(np.ones(K + 1))[:K]
        feature = rng.normal(size=(2, 2, 3))
        new = mem.apply_write(block, w, feature)
        lo = np.minimum(block.slots, feature)
        hi = np.maximum(block.slots, feature)
        worst = max(worst, float(np.max(np.maximum(lo - new.slots, new.slots - hi))))
        key_err = float(np.max(np.abs(new.keys - np.mean(new.slots, axis=(1, 2)))))
        worst = max(worst, key_err)
    return Check("memory write convexity and key coherence", worst, 0.0)


def _fd_error(fn: Callable, x: np.ndarray, eps: float = 1e-5) -> float:
    v = ad.Var(x)
    out = fn(v)
    # a non-uniform cotangent so softmax-like maps do not give zero gradients
    weights = np.linspace(0.5, 1.5, ad.value(out).size).reshape(ad.value(out).shape)
    ad.sum_(ad.mul(out, weights)).backward()
    analytic = v.grad
    numeric = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        numeric[idx] = (np.sum(weights * fn(xp)) - np.sum(weights * fn(xm))) / (2 * eps)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))


def check_gradients(rng) -> Check:
    f = rng.normal(size=(5, 5, 2))
    t = rng.normal(size=(2, 2, 2))
    cases = [
        lambda x: ad.xcorr(x, t),
        lambda x: ad.avgpool(x, 2, 1),
        lambda x: ad.softmax(ad.reshape(x, (-1,))),
        lambda x: ad.layer_norm(ad.reshape(x, (-1,)), 1.3, 0.2),
    ]
    return Check("reverse-mode gradients vs central differences", max(_fd_error(c, f) for c in cases), 1e-6)


def run(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    checks = [
        check_xcorr(rng),
        check_avgpool(rng),
        check_softmax(rng),
        check_write_convexity(rng),
        check_gradients(rng),
    ]
    for c in checks:
        out(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: error {c.error:.3g} (bound {c.bound:g})")
    return all(c.passed for c in checks)
