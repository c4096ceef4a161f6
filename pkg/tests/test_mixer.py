import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from heartnoise.errors import DegenerateSignalError, InvalidArgumentError, PlacementError
from heartnoise.mixer import MixRequest, compute_gain, draw_offset, measure_power, mix_at_snr
from heartnoise.signal import Waveform

RATE = 2000


def sine(n, f=50.0, amp=1.0):
    return Waveform(amp * np.sin(2 * np.pi * f * np.arange(n) / RATE), RATE)


def test_measure_power_examples(rng):
    assert measure_power(Waveform(np.full(100, 0.5), RATE)) == 0.25
    assert measure_power(sine(2000)) == pytest.approx(0.5, abs=1e-12)
    x = rng.standard_normal(500)
    assert measure_power(Waveform(2 * x, RATE)) == pytest.approx(4 * measure_power(Waveform(x, RATE)), rel=1e-12)
    assert measure_power(np.arange(10.0), 2, 3) == pytest.approx((4 + 9 + 16) / 3)
    with pytest.raises(InvalidArgumentError):
        measure_power(np.ones(4), 2, 0)
    with pytest.raises(InvalidArgumentError):
        measure_power(np.ones(4), 2, 5)


def test_compute_gain_closed_forms():
    assert compute_gain(1.0, 1.0, 0) == 1.0
    assert compute_gain(1.0, 1.0, 10) == pytest.approx(10 ** -0.5, rel=1e-12)
    assert compute_gain(4.0, 1.0, 0) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(DegenerateSignalError):
        compute_gain(0.0, 1.0, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3), st.floats(-20, 60))
def test_compute_gain_achieves_target(ps, pn, snr):
    g = compute_gain(ps, pn, snr)
    assert 10 * math.log10(ps / (g * g * pn)) == pytest.approx(snr, abs=1e-9)


def test_equal_sines_at_zero_db():
    s = sine(4000)
    res = mix_at_snr(MixRequest(s, s, 0.0))
    assert res.gain == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(res.mixed.samples, 2 * s.samples, atol=1e-12)


def test_huge_snr_leaves_clean(rng):
    clean = Waveform(rng.uniform(-1, 1, 3000), RATE)
    noise = Waveform(rng.standard_normal(3000), RATE)
    res = mix_at_snr(MixRequest(clean, noise, 200.0))
    assert np.max(np.abs(res.mixed.samples - clean.samples)) < 1e-8


def test_tile_and_crop_policies(rng):
    clean = Waveform(rng.uniform(-1, 1, 1000), RATE)
    noise = Waveform(rng.standard_normal(300), RATE)
    res = mix_at_snr(MixRequest(clean, noise, 5.0))
    added = (res.mixed.samples - clean.samples) / res.gain
    np.testing.assert_allclose(added, np.tile(noise.samples, 4)[:1000], atol=1e-12)
    with pytest.raises(PlacementError):
        mix_at_snr(MixRequest(clean, noise, 5.0, loop_policy="crop"))


def test_random_offset_window_and_linearity(rng):
    clean = Waveform(rng.uniform(-1, 1, 5000), RATE)
    noise = Waveform(rng.standard_normal(800), RATE)
    req = MixRequest(clean, noise, -5.0, placement="random_offset", seed=99)
    a, b = mix_at_snr(req), mix_at_snr(req)
    assert a.offset_samples == b.offset_samples and a.mixed == b.mixed
    o = a.offset_samples
    diff = a.mixed.samples - clean.samples
    assert not diff[:o].any() and not diff[o + 800:].any()
    np.testing.assert_allclose(diff[o:o + 800], a.gain * noise.samples, rtol=0, atol=1e-15)
    p_s = np.mean(clean.samples[o:o + 800] ** 2)
    assert 10 * np.log10(p_s / np.mean(diff[o:o + 800] ** 2)) == pytest.approx(-5.0, abs=0.05)


def test_random_offset_long_noise_needs_crop(rng):
    clean = Waveform(rng.uniform(-1, 1, 500), RATE)
    noise = Waveform(rng.standard_normal(800), RATE)
    with pytest.raises(PlacementError):
        mix_at_snr(MixRequest(clean, noise, 0.0, placement="random_offset"))
    res = mix_at_snr(MixRequest(clean, noise, 0.0, placement="random_offset", loop_policy="crop"))
    assert res.offset_samples == 0 and res.active_samples == 500


def test_request_validation(rng):
    w = Waveform(np.ones(10), RATE)
    with pytest.raises(InvalidArgumentError):
        MixRequest(w, w, math.inf)
    with pytest.raises(InvalidArgumentError):
        MixRequest(w, Waveform(np.ones(10), 4000), 0.0)
    with pytest.raises(DegenerateSignalError):
        mix_at_snr(MixRequest(w, Waveform(np.zeros(10), RATE), 0.0))


def test_offsets_uniform_chi_square():
    offs = np.array([draw_offset(1099, 100, s) for s in range(10_000)])
    assert offs.min() >= 0 and offs.max() <= 999
    counts = np.bincount(offs // 100, minlength=10)
    assert chisquare(counts).pvalue > 0.001


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(-10, 40), st.sampled_from(["full_overlap", "random_offset"]))
def test_measured_snr_within_tolerance(seed, snr, placement):
    r = np.random.default_rng(seed)
    clean = Waveform(r.uniform(-1, 1, 3000), RATE)
    noise = Waveform(r.standard_normal(700 if placement == "random_offset" else 3000), RATE)
    res = mix_at_snr(MixRequest(clean, noise, snr, placement=placement, seed=seed))
    assert abs(res.measured_snr_db - snr) <= 0.05
