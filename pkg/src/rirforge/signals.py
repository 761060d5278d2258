"""Room impulse response container, preprocessing, and energy decay curves.

All operations are pure functions on immutable inputs; arrays are float64
throughout because the backward-integrated energy sums are cancellation-prone
in single precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroSignal
from .nn import autodiff as ops

DEFAULT_KEEP_SECONDS = 0.0025
DEFAULT_FLOOR_DB = -60.0

# first-arrival detection threshold, relative to the absolute peak
ARRIVAL_THRESHOLD = 0.1


@dataclass(frozen=True)
class Rir:
    """A fixed-length single-channel impulse response with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"expected a 1-D signal, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("empty signal")
        if not np.all(np.isfinite(arr)):
            raise ValueError("signal contains NaN or Inf")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class Edc:
    """Normalized energy decay curve in dB, clamped at ``floor_db``."""

    values_db: np.ndarray
    floor_db: float

    def __post_init__(self):
        object.__setattr__(
            self, "values_db", np.asarray(self.values_db, dtype=np.float64)
        )

    def __len__(self):
        return self.values_db.size


def _require_nonzero(x: np.ndarray, what: str = "signal"):
    if not np.any(x):
        raise AllZeroSignal(f"{what} is identically zero")


def normalize_peak(rir: Rir) -> Rir:
    """Scale so that the largest absolute sample is exactly 1."""
    peak = np.max(np.abs(rir.samples))
    if peak == 0.0:
        raise AllZeroSignal("cannot normalize an all-zero signal")
    return Rir(rir.samples / peak, rir.sample_rate)


def first_arrival_index(x: np.ndarray) -> int:
    """First index whose magnitude reaches ARRIVAL_THRESHOLD of the peak.

    The relative threshold keeps the detector robust to the low-level
    pre-arrival ripple that fractional-delay sincs leave before the direct
    path; a plain argmax would also jump to a reflection that happens to
    exceed the direct path.
    """
    x = np.asarray(x)
    _require_nonzero(x)
    thresh = ARRIVAL_THRESHOLD * np.max(np.abs(x))
    return int(np.argmax(np.abs(x) >= thresh))


def align_direct_path(rir: Rir, keep_seconds: float = DEFAULT_KEEP_SECONDS) -> Rir:
    """Shift the first arrival to ``round(keep_seconds * sample_rate)``.

    Samples shifted past either end are discarded; the vacated region is
    zero-filled. Length is preserved.
    """
    if keep_seconds < 0:
        raise ValueError("keep_seconds must be >= 0")
    x = rir.samples
    arrival = first_arrival_index(x)
    target = int(round(keep_seconds * rir.sample_rate))
    shift = target - arrival
    out = np.zeros_like(x)
    if shift >= 0:
        out[shift:] = x[: x.size - shift]
    else:
        out[: x.size + shift] = x[-shift:]
    return Rir(out, rir.sample_rate)


def fit_length(rir: Rir, k: int) -> Rir:
    """Truncate or zero-pad to exactly ``k`` samples (content-preserving prefix)."""
    if k <= 0:
        raise ValueError(f"target length must be positive, got {k}")
    x = rir.samples
    if x.size == k:
        return rir
    if x.size > k:
        return Rir(x[:k], rir.sample_rate)
    out = np.zeros(k, dtype=x.dtype)
    out[: x.size] = x
    return Rir(out, rir.sample_rate)


def edc_db(x, floor_db: float = DEFAULT_FLOOR_DB):
    """Normalized Schroeder EDC in dB along the last axis.

    E[n] = sum_{k>=n} x[k]^2, normalized by E[0], expressed as 10*log10 and
    clamped at ``floor_db``. The clamp is applied to the energy ratio before
    the log so that zero-energy tails produce the floor value with finite
    gradients; accepts a plain array or an autodiff Var.
    """
    energy = ops.rcumsum(ops.square(x))
    e0 = ops.slice_last(energy, 0, 1)
    ratio = ops.clamp_min(ops.div(energy, e0), 10.0 ** (floor_db / 10.0))
    return ops.mul(ops.log10(ratio), 10.0)


def compute_edc(rir: Rir, floor_db: float = DEFAULT_FLOOR_DB) -> Edc:
    """Energy decay curve of ``rir``, clamped at ``floor_db``."""
    _require_nonzero(rir.samples)
    vals = edc_db(rir.samples, floor_db)
    # exact floor for the public container (the ratio clamp lands within
    # ~1e-15 dB of it)
    vals = np.maximum(vals, floor_db)
    return Edc(vals, floor_db)
