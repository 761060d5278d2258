"""Completion quality metrics: early residual energy ratio, late RMSE, EDC MAE.

All three are reported in dB. Items where a metric is undefined (zero
residual energy) are excluded from the aggregates and counted instead of
being averaged as infinities.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch, ZeroTargetResidual
from .losses import LossConfig, edc_loss
from .signals import DEFAULT_FLOOR_DB

RMSE_CLAMP_DB = -120.0


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def rer_early(x_hat, x, c, k80: int) -> float:
    """Residual energy ratio over [0, k80) in dB; residuals are w.r.t. c.

    Returns -inf when the prediction residual has zero energy; raises
    ZeroTargetResidual when the target residual does (undefined ratio).
    """
    x_hat, x = _check_pair(x_hat, x)
    c = np.asarray(c, dtype=np.float64)
    if c.shape != x.shape:
        raise ShapeMismatch(f"conditioner shape {c.shape} != target shape {x.shape}")
    if not 0 < k80 <= x.size:
        raise ValueError(f"k80 must be in (0, {x.size}], got {k80}")
    r = x[:k80] - c[:k80]
    r_hat = x_hat[:k80] - c[:k80]
    den = float(np.sum(r * r))
    if den == 0.0:
        raise ZeroTargetResidual("target residual energy is zero in the early window")
    num = float(np.sum(r_hat * r_hat))
    if num == 0.0:
        return float("-inf")
    return 10.0 * np.log10(num / den)


def rmse_late(x_hat, x, k80: int) -> float:
    """RMSE over [k80, K) in dB (20 log10), clamped at -120 dB for reporting."""
    x_hat, x = _check_pair(x_hat, x)
    if not 0 < k80 < x.size:
        raise ValueError(f"k80 must be in (0, {x.size}), got {k80}")
    diff = x_hat[k80:] - x[k80:]
    rmse = float(np.sqrt(np.mean(diff * diff)))
    if rmse == 0.0:
        return RMSE_CLAMP_DB
    return max(20.0 * np.log10(rmse), RMSE_CLAMP_DB)


def edc_mae(x_hat, x, floor_db: float = DEFAULT_FLOOR_DB) -> float:
    """Mean absolute EDC error in dB over the target's above-floor mask."""
    return float(edc_loss(x_hat, x, LossConfig(edc_floor_db=floor_db)))


@dataclass(frozen=True)
class MetricSummary:
    """Per-item values (NaN marks undefined items) with derived aggregates."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    @property
    def finite(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]

    @property
    def excluded(self) -> int:
        return int(np.sum(~np.isfinite(self.values)))

    @property
    def mean(self) -> float:
        vals = self.finite
        return float(np.mean(vals)) if vals.size else float("nan")

    @property
    def std(self) -> float:
        vals = self.finite
        if vals.size <= 1:
            return 0.0 if vals.size else float("nan")
        return float(np.std(vals, ddof=1))


@dataclass(frozen=True)
class MetricReport:
    item_ids: tuple[str, ...]
    rer_early_db: MetricSummary
    rmse_late_db: MetricSummary
    edc_mae_db: MetricSummary

    def as_dict(self) -> dict:
        def block(s: MetricSummary) -> dict:
            return {
                "mean": s.mean,
                "std": s.std,
                "excluded": s.excluded,
                "values": [None if not np.isfinite(v) else v for v in s.values],
            }

        return {
            "item_ids": list(self.item_ids),
            "rer_early_db": block(self.rer_early_db),
            "rmse_late_db": block(self.rmse_late_db),
            "edc_mae_db": block(self.edc_mae_db),
        }


def evaluate_items(
    predictions,
    targets,
    conditioners,
    item_ids,
    k80: int,
    floor_db: float = DEFAULT_FLOOR_DB,
) -> MetricReport:
    """Compute all three metrics per item and collect them into a report."""
    rer_vals, rmse_vals, mae_vals = [], [], []
    for x_hat, x, c in zip(predictions, targets, conditioners, strict=True):
        try:
            rer_vals.append(rer_early(x_hat, x, c, k80))
        except ZeroTargetResidual:
            rer_vals.append(float("nan"))
        rmse_vals.append(rmse_late(x_hat, x, k80))
        mae_vals.append(edc_mae(x_hat, x, floor_db))
    return MetricReport(
        item_ids=tuple(item_ids),
        rer_early_db=MetricSummary(np.array(rer_vals)),
        rmse_late_db=MetricSummary(np.array(rmse_vals)),
        edc_mae_db=MetricSummary(np.array(mae_vals)),
    )


def write_report_json(report: MetricReport, path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")


def write_report_csv(report: MetricReport, path) -> None:
    """One row per item plus mean/std/excluded summary rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "rer_early_db", "rmse_late_db", "edc_mae_db"])
        for i, item in enumerate(report.item_ids):
            row = [item]
            for s in (report.rer_early_db, report.rmse_late_db, report.edc_mae_db):
                v = s.values[i]
                row.append("" if not np.isfinite(v) else repr(float(v)))
            writer.writerow(row)
        for label, fn in (("mean", "mean"), ("std", "std"), ("excluded", "excluded")):
            writer.writerow(
                [label]
                + [
                    repr(getattr(s, fn))
                    for s in (
                        report.rer_early_db,
                        report.rmse_late_db,
                        report.edc_mae_db,
                    )
                ]
            )
