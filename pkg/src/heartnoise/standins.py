"""Synthetic stand-ins for the recorded (non-color) noise types.

These are NOT recordings. They are crude generators that give each catalog
entry a plausible spectral/temporal character so the full pipeline runs
without external audio. Replace them with real clips through a catalog
manifest whose ``source`` column points at WAV files.

Each generator takes ``(n, rate, rng)`` and returns ``n`` raw samples; the
caller peak-normalizes. Band edges are clamped below Nyquist so every
stand-in works at any rate >= 1000 Hz.
"""
import numpy as np
from scipy.signal import butter, sosfilt

# clip length in seconds for short-duration stand-ins
SHORT_CLIP_SECONDS = {
    "sensor_movement": 0.4,
    "body_movement": 1.2,
    "coughing": 0.6,
    "digestive_sound": 1.5,
    "door_open_close": 0.8,
    "dog_barking": 0.5,
}


def _band(x, rate, lo, hi, order=4):
    nyq = rate / 2.0
    hi = min(hi, 0.95 * nyq)
    lo = min(lo, 0.5 * hi)
    if lo <= 0:
        sos = butter(order, hi, btype="lowpass", fs=rate, output="sos")
    else:
        sos = butter(order, [lo, hi], btype="bandpass", fs=rate, output="sos")
    return sosfilt(sos, x)


def _t(n, rate):
    return np.arange(n) / rate


def _tone(n, rate, f, phase=0.0):
    return np.sin(2 * np.pi * min(f, 0.45 * rate) * _t(n, rate) + phase)


def _decay(n, rate, tau):
    return np.exp(-_t(n, rate) / tau)


def _bursts(n, rate, rng, period, width):
    """Train of raised-cosine envelopes with jittered onsets."""
    env = np.zeros(n)
    w = max(int(width * rate), 2)
    bump = np.hanning(w)
    t = rng.uniform(0, period)
    while t * rate < n:
        i = int(t * rate)
        j = min(i + w, n)
        env[i:j] += bump[: j - i] * rng.uniform(0.6, 1.0)
        t += period * rng.uniform(0.7, 1.3)
    return env


def sensor_movement(n, rate, rng):
    x = _band(rng.standard_normal(n), rate, 0, 50) * _decay(n, rate, 0.08)
    return x + 0.2 * _band(rng.standard_normal(n), rate, 50, 400) * _decay(n, rate, 0.03)


def body_movement(n, rate, rng):
    env = np.hanning(n) ** 2
    return _band(rng.standard_normal(n), rate, 20, 500) * env


def deep_breathing(n, rate, rng):
    env = 0.5 * (1 - np.cos(2 * np.pi * 0.25 * _t(n, rate) + rng.uniform(0, 2 * np.pi)))
    return _band(rng.standard_normal(n), rate, 100, 600) * env


def fast_breathing(n, rate, rng):
    env = 0.5 * (1 - np.cos(2 * np.pi * 0.8 * _t(n, rate) + rng.uniform(0, 2 * np.pi)))
    return _band(rng.standard_normal(n), rate, 150, 800) * env


def coughing(n, rate, rng):
    burst = _band(rng.standard_normal(n), rate, 100, 900) * _decay(n, rate, 0.12)
    return burst * (1 - np.exp(-_t(n, rate) / 0.01))


def digestive_sound(n, rate, rng):
    x = np.zeros(n)
    for _ in range(rng.integers(3, 7)):
        f0 = rng.uniform(80, 300)
        chirp = np.sin(2 * np.pi * (f0 + 60 * _t(n, rate)) * _t(n, rate))
        x += chirp * _bursts(n, rate, rng, period=n / rate, width=rng.uniform(0.1, 0.3))
    return x


def talking(n, rate, rng):
    syllables = _bursts(n, rate, rng, period=0.25, width=0.18)
    voiced = sum(_tone(n, rate, 140 * k, rng.uniform(0, 6.3)) / k for k in range(1, 6))
    return _band(rng.standard_normal(n) + 2 * voiced, rate, 200, 900) * syllables


def door_open_close(n, rate, rng):
    knock = _tone(n, rate, 80) * _decay(n, rate, 0.15)
    return knock + 0.5 * _band(rng.standard_normal(n), rate, 0, 600) * _decay(n, rate, 0.02)


def phone_ringing(n, rate, rng):
    t = _t(n, rate)
    gate = ((t + rng.uniform(0, 3)) % 3.0) < 1.0
    trill = (np.floor(t * 20) % 2) * 2 - 1
    f1, f2 = 0.40 * rate, 0.44 * rate
    return gate * (_tone(n, rate, f1) + _tone(n, rate, f2)) * (0.75 + 0.25 * trill)


def music(n, rate, rng):
    x = np.zeros(n)
    note = max(int(0.5 * rate), 1)
    for start in range(0, n, note):
        stop = min(start + note, n)
        f0 = 110 * 2 ** (rng.integers(0, 24) / 12)
        seg = sum(_tone(stop - start, rate, f0 * k) / k**1.5 for k in range(1, 4))
        x[start:stop] = seg * _decay(stop - start, rate, 0.4)
    return x


def water_flow(n, rate, rng):
    return _band(rng.standard_normal(n), rate, 300, 1000) * (1 + 0.3 * _bursts(n, rate, rng, 0.1, 0.05))


def tv(n, rate, rng):
    return talking(n, rate, rng) + 0.5 * music(n, rate, rng)


def dishwasher(n, rate, rng):
    hum = sum(_tone(n, rate, 50 * k, rng.uniform(0, 6.3)) / k for k in range(1, 5))
    slosh = _band(rng.standard_normal(n), rate, 100, 700) * (0.5 + _bursts(n, rate, rng, 1.5, 1.0))
    return 0.4 * hum + slosh


def washing_machine(n, rate, rng):
    drum = 0.5 * (1 + np.sin(2 * np.pi * 1.0 * _t(n, rate)))
    return _band(rng.standard_normal(n), rate, 20, 250) * drum + 0.2 * _tone(n, rate, 60)


def kettle(n, rate, rng):
    ramp = np.linspace(0.2, 1.0, n)
    return _band(rng.standard_normal(n), rate, 400, 1000) * ramp


def vacuum_cleaner(n, rate, rng):
    motor = sum(_tone(n, rate, 190 * k, rng.uniform(0, 6.3)) / k for k in range(1, 4))
    return motor + _band(rng.standard_normal(n), rate, 100, 1000)


def dog_barking(n, rate, rng):
    f0 = rng.uniform(350, 500)
    bark = sum(_tone(n, rate, f0 * k) / k for k in range(1, 3))
    return bark * np.hanning(n) * _decay(n, rate, 0.2)


def bird_singing(n, rate, rng):
    t = _t(n, rate)
    carrier = 0.35 * rate + 0.05 * rate * np.sin(2 * np.pi * 12 * t)
    phase = 2 * np.pi * np.cumsum(carrier) / rate
    return np.sin(phase) * _bursts(n, rate, rng, period=0.4, width=0.15)


GENERATORS = {
    "sensor_movement": sensor_movement,
    "body_movement": body_movement,
    "deep_breathing": deep_breathing,
    "fast_breathing": fast_breathing,
    "coughing": coughing,
    "digestive_sound": digestive_sound,
    "talking": talking,
    "door_open_close": door_open_close,
    "phone_ringing": phone_ringing,
    "music": music,
    "water_flow": water_flow,
    "tv": tv,
    "dishwasher": dishwasher,
    "washing_machine": washing_machine,
    "kettle": kettle,
    "vacuum_cleaner": vacuum_cleaner,
    "dog_barking": dog_barking,
    "bird_singing": bird_singing,
}
