"""Surrogate "target-domain" variants of geometric RIRs.

Keeps the first arrival segment untouched and replaces everything after it
with exponentially decaying Gaussian noise whose energy matches the source
tail and whose decay rate follows the source's fitted EDC slope. This is a
non-physical stand-in (no wave interference, no diffraction): it exists so
the dataset-mixing and guidance training paths can be exercised end to end,
not to emulate a wave solver.
"""

from __future__ import annotations

import numpy as np

from .errors import AllZeroSignal
from .signals import DEFAULT_KEEP_SECONDS, Rir, compute_edc

# fit the EDC slope over this dB band (staying clear of both the 0 dB start
# and the -60 dB clamp)
FIT_BAND_DB = (-45.0, -5.0)

# the surrogate EDC must reach the floor within the signal, with ~10% margin
FLOOR_TARGET_DB = -66.0


def fit_edc_slope_db_per_sample(rir: Rir, start: int = 0) -> float:
    """Least-squares slope of the EDC (dB per sample) inside FIT_BAND_DB."""
    edc = compute_edc(rir).values_db
    lo, hi = FIT_BAND_DB
    idx = np.nonzero((edc >= lo) & (edc <= hi) & (np.arange(edc.size) >= start))[0]
    if idx.size < 8:
        # decay too fast or too shallow to fit inside the band; fall back to
        # the endpoint slope
        tail = edc[start:]
        return float((tail[-1] - tail[0]) / max(1, tail.size - 1))
    coeffs = np.polyfit(idx.astype(np.float64), edc[idx], 1)
    return float(coeffs[0])


def surrogate_tail(
    rir: Rir,
    rng: np.random.Generator,
    keep_seconds: float = DEFAULT_KEEP_SECONDS,
) -> Rir:
    """Source head + noise tail with matched energy and fitted decay rate.

    The tail's amplitude envelope is 10^(s n / 20) with s the fitted EDC
    slope, steepened if necessary so the EDC still reaches the floor within
    the signal; total tail energy equals the source tail's energy so the EDC
    is continuous at the splice.
    """
    x = rir.samples
    n_keep = int(round(keep_seconds * rir.sample_rate))
    n_keep = min(max(n_keep, 1), x.size - 1)
    tail_energy = float(np.sum(x[n_keep:] ** 2))
    if tail_energy <= 0.0:
        raise AllZeroSignal("source has no energy after the retained head")

    slope = fit_edc_slope_db_per_sample(rir, start=n_keep)
    required = FLOOR_TARGET_DB / (x.size - n_keep)
    slope = min(slope, required)  # steeper (more negative) wins

    n = np.arange(x.size - n_keep, dtype=np.float64)
    envelope = 10.0 ** (slope * n / 20.0)
    tail = rng.standard_normal(x.size - n_keep) * envelope
    tail *= np.sqrt(tail_energy / np.sum(tail * tail))

    out = x.copy()
    out[n_keep:] = tail
    return Rir(out, rir.sample_rate)
