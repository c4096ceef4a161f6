"""Waveform container, WAV I/O, resampling and pre-processing.

Everything here is a pure function over immutable :class:`Waveform` values;
samples are held as 64-bit floats and files are the only quantization
boundary.
"""
from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import List

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import (
    DegenerateSignalError,
    EmptySignalError,
    InvalidArgumentError,
    UnsupportedCodecError,
    WavFormatError,
)

log = logging.getLogger(__name__)

CANONICAL_RATE = 2000
PCM16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio: float64 samples with nominal range [-1, 1] and a rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("waveform samples must be finite")
        rate = int(self.sample_rate)
        if rate <= 0 or rate != self.sample_rate:
            raise InvalidArgumentError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", rate)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    def __repr__(self):
        return f"Waveform(n={self.samples.size}, sample_rate={self.sample_rate})"


def read_wav(path) -> Waveform:
    """Read a PCM-16 or float-32 WAV file into a mono :class:`Waveform`.

    Multi-channel files are averaged to mono. 16-bit codes are divided
    by 32768.
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except ValueError as exc:
        msg = str(exc).lower()
        if "unknown wave file format" in msg or "unsupported" in msg or "not supported" in msg:
            raise UnsupportedCodecError(f"{path}: {exc}") from exc
        raise WavFormatError(f"{path}: {exc}") from exc
    except (EOFError, struct.error, IndexError) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise UnsupportedCodecError(f"{path}: sample type {data.dtype} is not PCM-16 or float-32")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise EmptySignalError(f"{path}: no samples in data chunk")
    return Waveform(x, rate)


def write_wav(w: Waveform, path, warn: bool = True) -> int:
    """Write ``w`` as 16-bit PCM mono. Returns the number of clipped samples.

    Values outside [-1, 1] are hard-clipped and the count is logged (as a
    warning unless ``warn`` is false). 1.0 maps to 32767.
    """
    x = w.samples
    clipped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
    if clipped:
        log.log(logging.WARNING if warn else logging.DEBUG, "clipped %d samples writing %s", clipped, path)
    codes = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype("<i2")
    wavfile.write(os.fspath(path), w.sample_rate, codes)
    return clipped


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase windowed-sinc resampling (Kaiser window, beta 8).

    Output length is ``round(len(w) * target_rate / sample_rate)``.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise InvalidArgumentError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return w
    ratio = Fraction(target_rate, w.sample_rate)
    y = resample_poly(w.samples, ratio.numerator, ratio.denominator, window=("kaiser", 8.0))
    n_out = int(round(len(w) * target_rate / w.sample_rate))
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - y.size)])
    return Waveform(y, target_rate)


def normalize_amplitude(w: Waveform) -> Waveform:
    """Divide by the peak absolute value so that ``max|x| == 1``."""
    peak = np.max(np.abs(w.samples)) if len(w) else 0.0
    if peak == 0.0:
        raise DegenerateSignalError("cannot normalize an all-zero signal")
    return Waveform(w.samples / peak, w.sample_rate)


def zero_pad(w: Waveform, target_samples: int) -> Waveform:
    if target_samples < len(w):
        raise InvalidArgumentError(
            f"target length {target_samples} is shorter than the signal ({len(w)})"
        )
    if target_samples == len(w):
        return w
    y = np.zeros(int(target_samples))
    y[: len(w)] = w.samples
    return Waveform(y, w.sample_rate)


def segment(w: Waveform, segment_seconds: float, min_keep_seconds: float) -> List[Waveform]:
    """Split into consecutive, non-overlapping segments of equal length.

    A trailing remainder of at least ``min_keep_seconds`` is zero-padded to
    full length and kept; a shorter one is dropped.
    """
    if segment_seconds <= 0:
        raise InvalidArgumentError("segment_seconds must be positive")
    if min_keep_seconds > segment_seconds:
        raise InvalidArgumentError("min_keep_seconds cannot exceed segment_seconds")
    seg = int(round(segment_seconds * w.sample_rate))
    keep = int(round(min_keep_seconds * w.sample_rate))
    n_full, rem = divmod(len(w), seg)
    out = [Waveform(w.samples[i * seg:(i + 1) * seg], w.sample_rate) for i in range(n_full)]
    if rem and rem >= keep:
        tail = Waveform(w.samples[n_full * seg:], w.sample_rate)
        out.append(zero_pad(tail, seg))
    return out
