"""Cosine-schedule DDPM machinery with x-prediction and classifier-free guidance.

Signals are plain arrays of shape (K,) or (batch, K); the denoiser is any
callable mapping (x_t, conditioner, t) to an estimate of the clean signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSchedule, ShapeMismatch

COSINE_OFFSET = 0.008
# per-step noise cap from the cosine-schedule formulation: 1 - alpha_t <= 0.999
MAX_STEP_NOISE = 0.999


@dataclass(frozen=True)
class Schedule:
    """Precomputed diffusion quantities; index 0 is the clean endpoint.

    alpha_bar[0] = 1 exactly, alpha_bar strictly decreasing; alpha[t] =
    alpha_bar[t] / alpha_bar[t-1] for t >= 1 (alpha[0] is a placeholder 1);
    sigma[1] = 0.
    """

    alpha_bar: np.ndarray
    alpha: np.ndarray
    sigma: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.alpha_bar.size - 1


def cosine_schedule(num_steps: int, offset: float = COSINE_OFFSET) -> Schedule:
    """Build the squared-cosine noise schedule with the standard offset.

    f(t) = cos^2(((t/T + offset) / (1 + offset)) * pi/2), alpha_bar_t =
    f(t)/f(0). Per-step noise 1 - alpha_t is capped at MAX_STEP_NOISE and
    alpha_bar is re-accumulated from the capped steps so the table stays
    self-consistent (the raw formula reaches alpha_bar_T = 0).
    """
    if num_steps < 1:
        raise InvalidSchedule(f"need at least one step, got {num_steps}")
    if not 0.0 < offset < 1.0:
        raise InvalidSchedule(f"offset must be in (0, 1), got {offset}")
    t = np.arange(num_steps + 1, dtype=np.float64)
    f = np.cos(((t / num_steps + offset) / (1.0 + offset)) * (np.pi / 2.0)) ** 2
    abar_raw = f / f[0]
    alpha_steps = np.clip(abar_raw[1:] / abar_raw[:-1], 1.0 - MAX_STEP_NOISE, None)
    alpha_bar = np.concatenate([[1.0], np.cumprod(alpha_steps)])
    alpha = np.concatenate([[1.0], alpha_steps])
    var = (1.0 - alpha_bar[:-1]) * (1.0 - alpha[1:]) / (1.0 - alpha_bar[1:])
    sigma = np.concatenate([[0.0], np.sqrt(var)])
    return Schedule(alpha_bar=alpha_bar, alpha=alpha, sigma=sigma)


def _check_t(t, num_steps):
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > num_steps):
        raise ValueError(f"t must lie in [1, {num_steps}], got {t}")
    return t


def _per_item(coeffs: np.ndarray, t, target_ndim: int):
    """Index a schedule table at t and append axes to broadcast over samples."""
    vals = coeffs[np.asarray(t)]
    extra = target_ndim - vals.ndim
    return vals.reshape(vals.shape + (1,) * extra)


def forward_diffuse(x0: np.ndarray, t, eps: np.ndarray, sched: Schedule) -> np.ndarray:
    """x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ShapeMismatch(f"noise shape {eps.shape} != signal shape {x0.shape}")
    t = _check_t(t, sched.num_steps)
    abar = _per_item(sched.alpha_bar, t, x0.ndim)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def reverse_mean(x_t: np.ndarray, x0_hat: np.ndarray, t, sched: Schedule) -> np.ndarray:
    """Posterior mean of x_{t-1} given x_t and the clean-signal estimate.

    mu = sqrt(alpha_bar_{t-1}) (1 - alpha_t) / (1 - alpha_bar_t) * x0_hat
       + sqrt(alpha_t) (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * x_t
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if x_t.shape != x0_hat.shape:
        raise ShapeMismatch(f"x_t shape {x_t.shape} != x0_hat shape {x0_hat.shape}")
    t = _check_t(t, sched.num_steps)
    abar_t = _per_item(sched.alpha_bar, t, x_t.ndim)
    abar_prev = _per_item(sched.alpha_bar, np.asarray(t) - 1, x_t.ndim)
    alpha_t = _per_item(sched.alpha, t, x_t.ndim)
    denom = 1.0 - abar_t
    coef_x0 = np.sqrt(abar_prev) * (1.0 - alpha_t) / denom
    coef_xt = np.sqrt(alpha_t) * (1.0 - abar_prev) / denom
    return coef_x0 * x0_hat + coef_xt * x_t


def cfg_combine(x0_cond: np.ndarray, x0_uncond: np.ndarray, s: float) -> np.ndarray:
    """Guided prediction: x0_uncond + s * (x0_cond - x0_uncond).

    s = 1 short-circuits to the conditional prediction (bit-exact, and the
    sampler skips the unconditional pass entirely in that case).
    """
    if s < 1.0:
        raise ValueError(f"guidance scale must be >= 1, got {s}")
    x0_cond = np.asarray(x0_cond)
    if s == 1.0:
        return x0_cond
    x0_uncond = np.asarray(x0_uncond)
    if x0_cond.shape != x0_uncond.shape:
        raise ShapeMismatch(
            f"conditional shape {x0_cond.shape} != unconditional shape {x0_uncond.shape}"
        )
    return x0_uncond + s * (x0_cond - x0_uncond)


def sample(
    denoiser,
    cond: np.ndarray,
    sched: Schedule,
    guidance: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Run the full reverse process from Gaussian noise.

    denoiser(x_t, c, t) -> clean-signal estimate of the same shape. The
    unconditional branch feeds an all-zero conditioner; no noise is added in
    the final step.
    """
    if rng is None:
        rng = np.random.default_rng()
    cond = np.asarray(cond, dtype=np.float64)
    x = rng.standard_normal(cond.shape)
    null_cond = np.zeros_like(cond)
    for t in range(sched.num_steps, 0, -1):
        pred_cond = np.asarray(denoiser(x, cond, t))
        if pred_cond.shape != cond.shape:
            raise ShapeMismatch(
                f"denoiser returned shape {pred_cond.shape}, expected {cond.shape}"
            )
        if guidance == 1.0:
            x0_hat = pred_cond
        else:
            pred_uncond = np.asarray(denoiser(x, null_cond, t))
            x0_hat = cfg_combine(pred_cond, pred_uncond, guidance)
        x = reverse_mean(x, x0_hat, t, sched)
        if t > 1:
            x = x + sched.sigma[t] * rng.standard_normal(cond.shape)
    return x
