"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every op in this module accepts either plain ``np.ndarray`` inputs (in which
case it computes and returns a plain array, building no graph) or :class:`Var`
inputs (in which case the result is a :class:`Var` carrying vector-Jacobian
closures back to its parents). Network code written against these ops
therefore runs untraced at full numpy speed for inference and finite
differences, and traced for training.

Weight arrays may carry extra leading batch dimensions that broadcast against
the data batch; the untraced path relies on this for vectorized
finite-difference checks.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import GraphConsumed

__all__ = [
    "Var",
    "Recording",
    "backward_from",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "square",
    "matmul",
    "conv1d",
    "silu",
    "group_norm",
    "upsample_nearest2",
    "concat",
    "rcumsum",
    "log10",
    "clamp_min",
    "absolute",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "slice_last",
]

_LN10 = math.log(10.0)


class Var:
    """A node in the backward graph: an array plus vjp links to its parents."""

    __slots__ = ("data", "grad", "_parents")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data)
        self.grad = None
        self._parents = parents

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Var(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _val(x):
    return x.data if isinstance(x, Var) else x


def _traced(*xs):
    return any(isinstance(x, Var) for x in xs)


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _shape_of(x):
    return np.shape(x)


def _topo(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward_from(root, seed=None):
    """Accumulate gradients of ``root`` into every reachable leaf's ``.grad``.

    Interior nodes are released as the graph is walked; leaves keep their
    accumulated gradient. Use :class:`Recording` when the strict single-use
    guard is needed.
    """
    order = _topo(root)
    root.grad = np.ones_like(root.data) if seed is None else np.asarray(seed)
    for node in reversed(order):
        g = node.grad
        if g is None or not node._parents:
            continue
        for parent, vjp in node._parents:
            pg = vjp(g)
            if parent.grad is None:
                parent.grad = pg
            else:
                parent.grad = parent.grad + pg
        node._parents = ()
        if node is not root:
            node.grad = None


class Recording:
    """A completed forward trace of a scalar loss, consumable exactly once."""

    def __init__(self, loss, leaves):
        self.loss = loss
        self.leaves = leaves  # name -> Var
        self._consumed = False

    @property
    def value(self):
        return float(self.loss.data)

    def backward(self):
        """Return gradients of the recorded loss, keyed like ``leaves``."""
        if self._consumed:
            raise GraphConsumed("recording already consumed by backward()")
        self._consumed = True
        backward_from(self.loss)
        grads = {}
        for name, leaf in self.leaves.items():
            g = leaf.grad
            grads[name] = np.zeros_like(leaf.data) if g is None else g
        return grads


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    if not _traced(a, b):
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g, _shape_of(av))))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(g, _shape_of(bv))))
    return Var(out, tuple(parents))


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    if not _traced(a, b):
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g, _shape_of(av))))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(-g, _shape_of(bv))))
    return Var(out, tuple(parents))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    if not _traced(a, b):
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g * bv, _shape_of(av))))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(g * av, _shape_of(bv))))
    return Var(out, tuple(parents))


def div(a, b):
    av, bv = _val(a), _val(b)
    out = av / bv
    if not _traced(a, b):
        return out
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(g / bv, _shape_of(av))))
    if isinstance(b, Var):
        parents.append(
            (b, lambda g: _unbroadcast(-g * av / (bv * bv), _shape_of(bv)))
        )
    return Var(out, tuple(parents))


def neg(a):
    av = _val(a)
    if not _traced(a):
        return -av
    return Var(-av, ((a, lambda g: -g),))


def square(a):
    av = _val(a)
    if not _traced(a):
        return av * av
    return Var(av * av, ((a, lambda g: g * (2.0 * av)),))


def silu(a):
    av = _val(a)
    sig = 1.0 / (1.0 + np.exp(-av))
    out = av * sig
    if not _traced(a):
        return out
    return Var(out, ((a, lambda g: g * (sig * (1.0 + av * (1.0 - sig)))),))


def absolute(a):
    av = _val(a)
    out = np.abs(av)
    if not _traced(a):
        return out
    return Var(out, ((a, lambda g: g * np.sign(av)),))


def log10(a):
    av = _val(a)
    out = np.log10(av)
    if not _traced(a):
        return out
    return Var(out, ((a, lambda g: g / (av * _LN10)),))


def clamp_min(a, floor):
    """Elementwise max(a, floor); gradient passes only where a > floor."""
    av = _val(a)
    out = np.maximum(av, floor)
    if not _traced(a):
        return out
    mask = av > floor
    return Var(out, ((a, lambda g: g * mask),))


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape):
    av = _val(a)
    out = av.reshape(shape)
    if not _traced(a):
        return out
    old = av.shape
    return Var(out, ((a, lambda g: g.reshape(old)),))


def concat(parts, axis):
    """Concatenate along ``axis``; the other dims broadcast across parts."""
    vals = [_val(p) for p in parts]
    ax = axis % vals[0].ndim
    other = np.broadcast_shapes(*[v.shape[:ax] + v.shape[ax + 1 :] for v in vals])
    vals_b = [
        np.broadcast_to(v, other[:ax] + (v.shape[ax],) + other[ax:]) for v in vals
    ]
    out = np.concatenate(vals_b, axis=ax)
    if not _traced(*parts):
        return out
    sizes = [v.shape[ax] for v in vals]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    parents = []
    for i, p in enumerate(parts):
        if isinstance(p, Var):
            lo, hi = int(offsets[i]), int(offsets[i + 1])
            shape = vals[i].shape

            def vjp(g, lo=lo, hi=hi, shape=shape):
                index = [slice(None)] * g.ndim
                index[ax] = slice(lo, hi)
                return _unbroadcast(g[tuple(index)], shape)

            parents.append((p, vjp))
    return Var(out, tuple(parents))


def slice_last(a, start, stop):
    """a[..., start:stop] along the last axis."""
    av = _val(a)
    out = av[..., start:stop]
    if not _traced(a):
        return out
    shape = av.shape

    def vjp(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., start:stop] = g
        return full

    return Var(out, ((a, vjp),))


def reduce_sum(a, axis=None, keepdims=False):
    av = _val(a)
    out = av.sum(axis=axis, keepdims=keepdims)
    if not _traced(a):
        return out
    shape = av.shape

    def vjp(g):
        if axis is None:
            return np.full(shape, g)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(g_exp, shape).copy()

    return Var(out, ((a, vjp),))


def reduce_mean(a, axis=None, keepdims=False):
    av = _val(a)
    if axis is None:
        count = av.size
    else:
        count = av.shape[axis]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def rcumsum(a):
    """Reverse cumulative sum along the last axis: y[n] = sum_{k >= n} x[k]."""
    av = _val(a)
    out = np.cumsum(av[..., ::-1], axis=-1)[..., ::-1]
    if not _traced(a):
        return out
    return Var(out, ((a, lambda g: np.cumsum(g, axis=-1)),))


# ---------------------------------------------------------------------------
# linear algebra and network layers

def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = np.matmul(av, bv)
    if not _traced(a, b):
        return out
    parents = []
    if isinstance(a, Var):
        parents.append(
            (a, lambda g: _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape))
        )
    if isinstance(b, Var):
        parents.append(
            (b, lambda g: _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape))
        )
    return Var(out, tuple(parents))


def _im2col(xp, ksize, stride, dilation, l_out):
    # xp: (..., C, Lp) zero-padded input; returns (..., C*ksize, l_out) copy
    *lead, c, lp = xp.shape
    s = xp.strides
    shape = tuple(lead) + (c, ksize, l_out)
    strides = s[:-1] + (dilation * s[-1], stride * s[-1])
    win = np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)
    return win.reshape(tuple(lead) + (c * ksize, l_out))


def conv1d(x, w, stride=1, dilation=1, padding=0):
    """1-D convolution (cross-correlation) over the last axis.

    x: (..., C_in, L); w: (..., C_out, C_in, ksize). Leading dims broadcast
    under numpy matmul rules. Bias is not fused; add it separately.
    """
    xv, wv = _val(x), _val(w)
    c_out, c_in, ksize = wv.shape[-3:]
    l_in = xv.shape[-1]
    l_out = (l_in + 2 * padding - dilation * (ksize - 1) - 1) // stride + 1
    if padding > 0:
        pad = [(0, 0)] * (xv.ndim - 1) + [(padding, padding)]
        xp = np.pad(xv, pad)
    else:
        xp = xv
    cols = _im2col(xp, ksize, stride, dilation, l_out)
    w2 = wv.reshape(wv.shape[:-3] + (c_out, c_in * ksize))
    out = np.matmul(w2, cols)
    if not _traced(x, w):
        return out

    parents = []
    if isinstance(x, Var):
        x_shape = xv.shape
        lp = xp.shape[-1]

        def vjp_x(g):
            dcols = np.matmul(np.swapaxes(w2, -1, -2), g)
            dcols = dcols.reshape(dcols.shape[:-2] + (c_in, ksize, l_out))
            dxp = np.zeros(g.shape[:-2] + (c_in, lp), dtype=g.dtype)
            for j in range(ksize):
                dxp[..., j * dilation : j * dilation + stride * l_out : stride] += dcols[
                    ..., j, :
                ]
            if padding > 0:
                dxp = dxp[..., padding : lp - padding]
            return _unbroadcast(dxp, x_shape)

        parents.append((x, vjp_x))
    if isinstance(w, Var):
        w_shape = wv.shape

        def vjp_w(g):
            dw2 = np.matmul(g, np.swapaxes(cols, -1, -2))
            dw2 = _unbroadcast(dw2, w2.shape)
            return dw2.reshape(w_shape)

        parents.append((w, vjp_w))
    return Var(out, tuple(parents))


def group_norm(x, gamma, beta, groups, eps=1e-6):
    """Normalize (..., C, L) over channel groups, then scale and shift.

    gamma, beta: (..., C). Statistics are per sample and per group, taken
    over the group's channels and the full length axis.
    """
    xv, gv, bv = _val(x), _val(gamma), _val(beta)
    *lead, c, length = xv.shape
    if c % groups != 0:
        raise ValueError(f"channels {c} not divisible by groups {groups}")
    gshape = tuple(lead) + (groups, (c // groups) * length)
    xg = xv.reshape(gshape)
    mean = xg.mean(axis=-1, keepdims=True)
    centered = xg - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (centered * inv_std).reshape(xv.shape)
    out = xhat * gv[..., :, None] + bv[..., :, None]
    if not _traced(x, gamma, beta):
        return out

    parents = []
    if isinstance(x, Var):

        def vjp_x(g):
            dxhat = (g * gv[..., :, None]).reshape(gshape)
            xh = xhat.reshape(gshape)
            n = gshape[-1]
            dsum = dxhat.sum(axis=-1, keepdims=True)
            dxh_sum = (dxhat * xh).sum(axis=-1, keepdims=True)
            dx = (inv_std / n) * (n * dxhat - dsum - xh * dxh_sum)
            return dx.reshape(xv.shape)

        parents.append((x, vjp_x))
    if isinstance(gamma, Var):
        parents.append(
            (gamma, lambda g: _unbroadcast((g * xhat).sum(axis=-1), _shape_of(gv)))
        )
    if isinstance(beta, Var):
        parents.append((beta, lambda g: _unbroadcast(g.sum(axis=-1), _shape_of(bv))))
    return Var(out, tuple(parents))


def upsample_nearest2(a):
    """Repeat each sample twice along the last axis."""
    av = _val(a)
    out = np.repeat(av, 2, axis=-1)
    if not _traced(a):
        return out
    return Var(
        out,
        ((a, lambda g: g.reshape(g.shape[:-1] + (g.shape[-1] // 2, 2)).sum(-1)),),
    )
