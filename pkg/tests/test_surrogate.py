"""Surrogate tail construction: head preservation, decay matching, floor reach."""

import numpy as np
import pytest

from rirforge import ism
from rirforge.errors import AllZeroSignal
from rirforge.signals import Rir, compute_edc
from rirforge.surrogate import fit_edc_slope_db_per_sample, surrogate_tail


def decaying_source(seed=0, fs=16000, k=16384):
    """A dense ISM response that decays through -60 dB within k samples."""
    rng = np.random.default_rng(seed)
    room = ism.Room(dims=(5.5, 4.2, 3.0), absorption=(0.35,) * 6)
    src = ism.SourcePose((1.2, 1.1, 1.3))
    rcv = ism.ReceiverPose((4.0, 3.0, 1.7))
    return ism.simulate(room, src, rcv, 40, fs, k)


@pytest.fixture(scope="module")
def source():
    return decaying_source()


def test_head_identical(source):
    out = surrogate_tail(source, np.random.default_rng(1))
    n_keep = round(0.0025 * source.sample_rate)
    np.testing.assert_array_equal(out.samples[:n_keep], source.samples[:n_keep])
    assert len(out) == len(source)


def test_edc_monotone_and_reaches_floor(source):
    out = surrogate_tail(source, np.random.default_rng(2))
    edc = compute_edc(out).values_db
    assert np.all(np.diff(edc) <= 1e-9)
    assert edc[-1] <= -60.0 + 1e-6


def test_fitted_decay_within_ten_percent(source):
    out = surrogate_tail(source, np.random.default_rng(3))
    n_keep = round(0.0025 * source.sample_rate)
    src_slope = fit_edc_slope_db_per_sample(source, start=n_keep)
    out_slope = fit_edc_slope_db_per_sample(out, start=n_keep)
    assert out_slope == pytest.approx(src_slope, rel=0.10)


def test_tail_energy_matches_source(source):
    out = surrogate_tail(source, np.random.default_rng(4))
    n_keep = round(0.0025 * source.sample_rate)
    e_src = np.sum(source.samples[n_keep:] ** 2)
    e_out = np.sum(out.samples[n_keep:] ** 2)
    assert e_out == pytest.approx(e_src, rel=1e-12)


def test_deterministic(source):
    a = surrogate_tail(source, np.random.default_rng(5))
    b = surrogate_tail(source, np.random.default_rng(5))
    np.testing.assert_array_equal(a.samples, b.samples)


def test_shallow_source_gets_steepened():
    # a source that cannot reach -60 dB in its own length still yields a
    # surrogate whose EDC does
    rng = np.random.default_rng(6)
    k = 2048
    x = rng.standard_normal(k) * np.exp(-np.arange(k) / 4000.0)
    x[0] = 1.0
    out = surrogate_tail(Rir(x, 8000), np.random.default_rng(7))
    edc = compute_edc(out).values_db
    assert edc[-1] <= -60.0 + 1e-6


def test_headless_source_rejected():
    x = np.zeros(256)
    x[0] = 1.0  # all energy in the head, nothing after
    with pytest.raises(AllZeroSignal):
        surrogate_tail(Rir(x, 8000), np.random.default_rng(0))
