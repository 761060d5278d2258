"""Central finite-difference gradients for every parameter of a loss.

The loss function must be written against the untraced numpy ops, so that a
parameter tensor can be replaced by a stack of perturbed copies (one extra
leading axis) that broadcasts through the network; the loss then returns one
value per perturbed copy and a whole chunk of parameters is differenced in a
single vectorized forward pass. This keeps the oracle completely independent
of the reverse-mode code it is checking.
"""

from __future__ import annotations

import numpy as np

DEFAULT_STEP_SCALE = 1e-5


def finite_difference_gradients(
    loss_fn,
    params: dict[str, np.ndarray],
    step_scale: float = DEFAULT_STEP_SCALE,
    chunk: int = 128,
    names=None,
) -> dict[str, np.ndarray]:
    """Central differences with per-weight step ``step_scale * max(1, |w|)``.

    loss_fn(params) -> per-copy losses of shape (P,) when one tensor carries
    a leading batch axis of size P (and shape (1,) or scalar otherwise).
    """
    out: dict[str, np.ndarray] = {}
    for name in names if names is not None else params.keys():
        base = params[name]
        flat = base.reshape(-1)
        n = flat.size
        grad = np.empty(n, dtype=np.float64)
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            p = hi - lo
            h = step_scale * np.maximum(1.0, np.abs(flat[lo:hi]))
            stack = np.broadcast_to(base, (p,) + base.shape).reshape(p, n).copy()
            rows = np.arange(p)
            stack[rows, lo + rows] += h
            plus = _eval(loss_fn, params, name, stack.reshape((p,) + base.shape), p)
            stack[rows, lo + rows] -= 2.0 * h
            minus = _eval(loss_fn, params, name, stack.reshape((p,) + base.shape), p)
            grad[lo:hi] = (plus - minus) / (2.0 * h)
        out[name] = grad.reshape(base.shape)
    return out


def _eval(loss_fn, params, name, batched, p):
    trial = dict(params)
    trial[name] = batched
    vals = np.asarray(loss_fn(trial), dtype=np.float64).reshape(-1)
    if vals.size != p:
        raise ValueError(
            f"loss_fn returned {vals.size} values for a perturbation batch of {p}"
        )
    return vals


def max_relative_error(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    floor: float = 1e-6,
) -> dict[str, float]:
    """Per-tensor max of |a - n| / max(floor, |a| + |n|).

    The denominator floor keeps near-zero gradients (where central
    differences bottom out at the loss's rounding noise, ~1e-11 here) from
    dominating the comparison; above the floor the error is purely relative.
    """
    report = {}
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(floor, np.abs(a) + np.abs(n))
        report[name] = float(np.max(np.abs(a - n) / denom))
    return report
