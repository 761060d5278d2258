"""Training losses: per-sample MSE, energy-decay-curve loss, and their sum.

All losses reduce over the last (time) axis only, so batched inputs of shape
(B, K) yield per-item values of shape (B,). Predictions may be autodiff Vars,
in which case the returned loss is traced; targets are always treated as
constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroSignal, ShapeMismatch
from .nn import autodiff as ops
from .signals import DEFAULT_FLOOR_DB, edc_db


@dataclass(frozen=True)
class LossConfig:
    """Scale of the EDC term, its clamp floor, and the conditioner dropout rate."""

    lambda_edc: float = 1e-5
    edc_floor_db: float = DEFAULT_FLOOR_DB
    cfg_dropout_p: float = 0.2

    def __post_init__(self):
        if self.lambda_edc < 0:
            raise ValueError(f"lambda_edc must be >= 0, got {self.lambda_edc}")
        if not 0.0 <= self.cfg_dropout_p <= 1.0:
            raise ValueError(f"cfg_dropout_p must be in [0, 1], got {self.cfg_dropout_p}")


def _as_value(x):
    return x.data if isinstance(x, ops.Var) else np.asarray(x)


def _check_shapes(x_hat, x):
    a, b = _as_value(x_hat), _as_value(x)
    if a.shape != b.shape:
        raise ShapeMismatch(f"prediction shape {a.shape} != target shape {b.shape}")


def _maybe_scalar(x):
    if isinstance(x, np.ndarray) and x.ndim == 0:
        return float(x)
    return x


def mse_loss(x_hat, x):
    """Mean squared error over the time axis: (1/K) sum (x - x_hat)^2."""
    _check_shapes(x_hat, x)
    return _maybe_scalar(ops.reduce_mean(ops.square(ops.sub(x_hat, x)), axis=-1))


def edc_target_weights(x: np.ndarray, floor_db: float = DEFAULT_FLOOR_DB):
    """Target EDC in dB plus the normalized uniform weights over its mask.

    The mask keeps samples whose target energy ratio is still at or above the
    floor; weights are 1/|mask| inside and 0 outside.
    """
    x = np.asarray(x, dtype=np.float64)
    energy = np.cumsum(x[..., ::-1] ** 2, axis=-1)[..., ::-1]
    e0 = energy[..., :1]
    if np.any(e0 == 0.0):
        raise AllZeroSignal("target signal has zero energy")
    mask = energy / e0 >= 10.0 ** (floor_db / 10.0)
    counts = mask.sum(axis=-1, keepdims=True)
    weights = mask / counts
    return edc_db(x, floor_db), weights


def edc_loss(x_hat, x, cfg: LossConfig = LossConfig()):
    """Weighted mean absolute EDC error in dB (weights from the target mask)."""
    _check_shapes(x_hat, x)
    pred_val = _as_value(x_hat)
    if not np.all(np.any(pred_val != 0.0, axis=-1)):
        raise AllZeroSignal("prediction has an all-zero item; EDC undefined")
    target_db, weights = edc_target_weights(np.asarray(x), cfg.edc_floor_db)
    pred_db = edc_db(x_hat, cfg.edc_floor_db)
    err = ops.mul(ops.absolute(ops.sub(pred_db, target_db)), weights)
    return _maybe_scalar(ops.reduce_sum(err, axis=-1))


def total_loss(x_hat, x, cfg: LossConfig = LossConfig()):
    """MSE plus lambda times the EDC loss; the EDC term is skipped at lambda 0."""
    mse = mse_loss(x_hat, x)
    if cfg.lambda_edc == 0.0:
        return mse
    return ops.add(mse, ops.mul(edc_loss(x_hat, x, cfg), cfg.lambda_edc))
