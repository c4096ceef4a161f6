"""Additive noise mixing at an exact target SNR.

SNR is ``10*log10(P_signal / P_scaled_noise)`` with power defined as the
mean square over the noise-active region: the whole recording for
full-overlap (long) noises, the placement window for randomly placed
(short) noises.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateSignalError, InvalidArgumentError, PlacementError
from .signal import Waveform

FULL_OVERLAP = "full_overlap"
RANDOM_OFFSET = "random_offset"
TILE = "tile"
CROP = "crop"


def measure_power(w, start: int = 0, length: Optional[int] = None) -> float:
    """Mean of squared samples over ``[start, start + length)``."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if length is None:
        length = x.size - start
    if length <= 0:
        raise InvalidArgumentError("power window is empty")
    if start < 0 or start + length > x.size:
        raise InvalidArgumentError(f"window [{start}, {start + length}) out of bounds for {x.size} samples")
    seg = x[start:start + length]
    return float(np.dot(seg, seg) / length)


def compute_gain(p_signal: float, p_noise: float, snr_db: float) -> float:
    """Noise gain that puts the scaled noise ``snr_db`` below the signal."""
    if not (p_signal > 0 and p_noise > 0):
        raise DegenerateSignalError(f"powers must be positive (signal={p_signal}, noise={p_noise})")
    return math.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))


@dataclass(frozen=True)
class MixRequest:
    clean: Waveform
    noise: Waveform
    snr_db: float
    placement: str = FULL_OVERLAP
    seed: int = 0
    loop_policy: str = TILE

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise InvalidArgumentError("snr_db must be finite")
        if self.placement not in (FULL_OVERLAP, RANDOM_OFFSET):
            raise InvalidArgumentError(f"unknown placement {self.placement!r}")
        if self.loop_policy not in (TILE, CROP):
            raise InvalidArgumentError(f"unknown loop policy {self.loop_policy!r}")
        if self.clean.sample_rate != self.noise.sample_rate:
            raise InvalidArgumentError("clean and noise sample rates differ; resample first")


@dataclass(frozen=True)
class MixResult:
    mixed: Waveform
    gain: float
    offset_samples: int
    measured_snr_db: float
    active_samples: int


def _fit_length(noise: np.ndarray, n: int, policy: str) -> np.ndarray:
    if noise.size >= n:
        return noise[:n]
    if policy == CROP:
        raise PlacementError(f"noise ({noise.size} samples) shorter than signal ({n}) with crop policy")
    reps = -(-n // noise.size)
    return np.tile(noise, reps)[:n]


def draw_offset(n_clean: int, n_noise: int, seed: int) -> int:
    """Uniform integer offset in ``[0, n_clean - n_noise]``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return int(rng.integers(0, n_clean - n_noise, endpoint=True))


def mix_at_snr(req: MixRequest) -> MixResult:
    clean = req.clean.samples
    noise = req.noise.samples
    n = clean.size

    if req.placement == FULL_OVERLAP:
        placed = _fit_length(noise, n, req.loop_policy)
        offset, active = 0, n
    else:
        if noise.size > n:
            if req.loop_policy != CROP:
                raise PlacementError(
                    f"noise ({noise.size} samples) longer than signal ({n}); use the crop policy"
                )
            noise = noise[:n]
        active = noise.size
        offset = draw_offset(n, active, req.seed)
        placed = noise

    p_s = measure_power(clean, offset, active)
    p_n = measure_power(placed, 0, active)
    if p_s == 0:
        raise DegenerateSignalError("clean signal is silent over the noise-active region")
    if p_n == 0:
        raise DegenerateSignalError("noise is silent")
    g = compute_gain(p_s, p_n, req.snr_db)

    mixed = clean.copy()
    mixed[offset:offset + active] += g * placed
    added = mixed[offset:offset + active] - clean[offset:offset + active]
    p_added = measure_power(added)
    measured = 10.0 * math.log10(p_s / p_added) if p_added > 0 else math.inf
    return MixResult(Waveform(mixed, req.clean.sample_rate), g, offset, measured, active)
