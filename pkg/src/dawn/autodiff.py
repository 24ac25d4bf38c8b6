"""Small tape-based reverse-mode differentiation over numpy arrays.

Every function in this module accepts plain ``np.ndarray`` operands or
:class:`Var` operands. With no ``Var`` among the inputs the result is a
plain array and nothing is recorded, so inference code pays no overhead.
With at least one ``Var`` the result is a ``Var`` that remembers how to
pull gradients back to its parents.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from dawn import ops


class Var:
    """A differentiable value node."""

    __slots__ = ("value", "grad", "parents", "vjp", "name")
    # keep numpy from broadcasting ndarray (op) Var into an object array
    __array_ufunc__ = None

    def __init__(self, value, parents: tuple = (), vjp: Callable | None = None, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.vjp = vjp
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __len__(self):
        return len(self.value)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def ravel(self):
        return reshape(self, (-1,))

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self, seed=None):
        """Accumulate d(self)/d(node) into ``.grad`` of every ancestor."""
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {
            id(self): np.ones_like(self.value) if seed is None else np.asarray(seed, dtype=np.float64)
        }
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def is_var(x) -> bool:
    return isinstance(x, Var)


def detach(x) -> np.ndarray:
    return value(x)


def _record(out, inputs: Sequence, vjp: Callable):
    """Wrap ``out`` as a Var when any input is one.

    ``vjp(g)`` returns one gradient per entry of ``inputs``; entries for
    non-Var inputs are dropped.
    """
    flags = [isinstance(x, Var) for x in inputs]
    if not any(flags):
        return out
    parents = tuple(x for x, f in zip(inputs, flags) if f)

    def pull(g):
        gs = vjp(g)
        return tuple(gi for gi, f in zip(gs, flags) if f)

    return Var(out, parents, pull)


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --- elementwise arithmetic -------------------------------------------------


def add(a, b):
    av, bv = value(a), value(b)
    return _record(av + bv, (a, b), lambda g: (unbroadcast(g, av.shape), unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value(a), value(b)
    return _record(av - bv, (a, b), lambda g: (unbroadcast(g, av.shape), unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value(a), value(b)
    return _record(
        av * bv, (a, b), lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape))
    )


def div(a, b):
    av, bv = value(a), value(b)
    out = av / bv
    return _record(
        out, (a, b), lambda g: (unbroadcast(g / bv, av.shape), unbroadcast(-g * out / bv, bv.shape))
    )


def power(a, p: float):
    av = value(a)
    return _record(av**p, (a,), lambda g: (g * p * av ** (p - 1),))


def exp(a):
    out = np.exp(value(a))
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    av = value(a)
    return _record(np.log(av), (a,), lambda g: (g / av,))


def sqrt(a):
    """Square root; the gradient at 0 is taken as 0, a valid subgradient of a norm."""
    out = np.sqrt(value(a))

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * 0.5 / safe, 0.0),)

    return _record(out, (a,), vjp)


def tanh(a):
    out = np.tanh(value(a))
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    av = value(a)
    out = np.exp(-np.logaddexp(0.0, -av))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    av = value(a)
    mask = av > 0
    return _record(av * mask, (a,), lambda g: (g * mask,))


def softplus(a):
    """log(1 + exp(a)), computed without overflow."""
    av = value(a)
    out = np.logaddexp(0.0, av)
    return _record(out, (a,), lambda g: (g * np.exp(-np.logaddexp(0.0, -av)),))


def clamp_rounding(a, lo, hi):
    """Clamp into [lo, hi] to undo last-ulp rounding overshoot.

    Meant for expressions that are mathematically inside the interval, so the
    gradient passes straight through.
    """
    av = value(a)
    return _record(np.clip(av, lo, hi), (a,), lambda g: (g,))


# --- shape and reduction ---------------------------------------------------


def matmul(a, b):
    av, bv = value(a), value(b)
    out = av @ bv

    def vjp(g):
        if av.ndim == 2 and bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return _record(out, (a, b), vjp)


def sum_(a, axis=None, keepdims=False):
    av = value(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _record(out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    av = value(a)
    out = av.mean(axis=axis, keepdims=keepdims)
    count = av.size // max(out.size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, av.shape).copy(),)

    return _record(out, (a,), vjp)


def reshape(a, shape):
    av = value(a)
    return _record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def broadcast_to(a, shape):
    av = value(a)
    return _record(np.broadcast_to(av, shape).copy(), (a,), lambda g: (unbroadcast(g, av.shape),))


def getitem(a, idx):
    av = value(a)

    def vjp(g):
        out = np.zeros_like(av)
        np.add.at(out, idx, g)
        return (out,)

    return _record(av[idx], (a,), vjp)


def stack(items: Sequence, axis: int = 0):
    vals = [value(x) for x in items]
    out = np.stack(vals, axis=axis)

    def vjp(g):
        return tuple(np.take(g, k, axis=axis) for k in range(len(vals)))

    return _record(out, tuple(items), vjp)


# --- composite nonlinearities ----------------------------------------------


def softmax(a):
    """Softmax over every entry of ``a``; the max shift is a constant."""
    shift = value(a).max()
    e = exp(sub(a, shift))
    return div(e, sum_(e))


def layer_norm(x, gain, bias, eps: float = 1e-5):
    mu = mean(x)
    xc = sub(x, mu)
    var = mean(mul(xc, xc))
    return add(mul(div(xc, sqrt(add(var, eps))), gain), bias)


def cosine_sim(u, v, eps: float = ops.COSINE_EPS):
    nu = sqrt(sum_(mul(u, u)))
    nv = sqrt(sum_(mul(v, v)))
    return div(sum_(mul(u, v)), add(mul(nu, nv), eps))


# --- spatial kernels ---------------------------------------------------------


def _scatter_windows(gw: np.ndarray, in_shape: tuple, stride: int) -> np.ndarray:
    """Adjoint of ``ops.windows``: fold (oh, ow, kh, kw, c) back onto the input."""
    oh, ow, kh, kw, _ = gw.shape
    out = np.zeros(in_shape)
    for s in range(kh):
        for t in range(kw):
            out[s : s + stride * oh : stride, t : t + stride * ow : stride] += gw[:, :, s, t]
    return out


def conv2d(x, w, stride: int = 1):
    xv, wv = value(x), value(w)
    out = ops.conv2d(xv, wv, stride)

    def vjp(g):
        kh, kw, cin, cout = wv.shape
        win = ops.windows(xv, kh, kw, stride).transpose(0, 1, 3, 4, 2)
        oh, ow = win.shape[:2]
        g2 = g.reshape(oh * ow, cout)
        gw = (win.reshape(oh * ow, -1).T @ g2).reshape(wv.shape)
        gcols = (g2 @ wv.reshape(-1, cout).T).reshape(oh, ow, kh, kw, cin)
        return _scatter_windows(gcols, xv.shape, stride), gw

    return _record(out, (x, w), vjp)


def xcorr(f, m):
    """Differentiable valid cross-correlation (see ``ops.xcorr_valid``)."""
    mv = value(m)
    fv = value(f)
    out = ops.xcorr_valid(fv, mv)

    def vjp(g):
        win = ops.windows(fv, mv.shape[0], mv.shape[1])
        gm = np.einsum("ijkst,ij->stk", win, g, optimize=True)
        gwin = g[:, :, None, None, None] * mv[None, None]
        return _scatter_windows(gwin, fv.shape, 1), gm

    return _record(out, (f, m), vjp)


def avgpool(x, window: int, stride: int = 1):
    xv = value(x)
    out = ops.avgpool(xv, window, stride)

    def vjp(g):
        oh, ow, c = g.shape
        gw = np.broadcast_to(g[:, :, None, None, :] / (window * window), (oh, ow, window, window, c))
        return (_scatter_windows(gw, xv.shape, stride),)

    return _record(out, (x,), vjp)


def maxpool(x, window: int, stride: int):
    xv = value(x)
    win = ops.windows(xv, window, window, stride)  # (oh, ow, c, k, k)
    oh, ow, c = win.shape[:3]
    flat = win.reshape(oh, ow, c, -1)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        onehot = np.zeros((oh, ow, c, window * window))
        np.put_along_axis(onehot, arg[..., None], g[..., None], axis=-1)
        gw = onehot.reshape(oh, ow, c, window, window).transpose(0, 1, 3, 4, 2)
        return (_scatter_windows(gw, xv.shape, stride),)

    return _record(out, (x,), vjp)
