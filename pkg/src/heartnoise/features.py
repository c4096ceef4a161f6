"""STFT, power/log/mel spectrograms and time-averaged feature vectors.

Framing is uncentered: ``frames = 1 + (N - window_len) // hop`` and the
trailing partial frame is dropped. FFT length equals the window length.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .errors import DimensionError, EmptySignalError, InvalidArgumentError, ResolutionError, TooShortError
from .signal import Waveform

LOG_EPS = 1e-10
KINDS = ("log_spec", "mel_spec", "log_spec_avg", "mel_spec_avg")


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 256
    hop: int = 128
    window: str = "hann"

    def __post_init__(self):
        if not (0 < self.hop <= self.window_len):
            raise InvalidArgumentError("need 0 < hop <= window_len")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray  # [freq_bins, frames], power
    bin_hz: float
    frame_hop_s: float


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    weights: np.ndarray  # [n_mels, freq_bins]
    f_min: float
    f_max: float
    center_hz: np.ndarray

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray  # [channels, frames] or [channels]
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("feature values must be finite")

    @property
    def shape(self):
        return self.values.shape


def frame_count(n_samples: int, cfg: StftConfig = StftConfig()) -> int:
    if n_samples < cfg.window_len:
        return 0
    return 1 + (n_samples - cfg.window_len) // cfg.hop


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Complex STFT, shape ``[window_len // 2 + 1, frames]``.

    Each column is the unnormalized DFT of one windowed frame.
    """
    if len(w) < cfg.window_len:
        raise TooShortError(f"signal of {len(w)} samples is shorter than one window ({cfg.window_len})")
    win = get_window(cfg.window, cfg.window_len, fftbins=True)
    frames = sliding_window_view(w.samples, cfg.window_len)[:: cfg.hop]
    return np.fft.rfft(frames * win, axis=1).T


def power_spec(X: np.ndarray, sample_rate: int = 2000, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Elementwise squared magnitude."""
    X = np.asarray(X)
    return Spectrogram(X.real**2 + X.imag**2, sample_rate / cfg.window_len, cfg.hop / sample_rate)


def spectrogram(w: Waveform, cfg: StftConfig = StftConfig()) -> Spectrogram:
    return power_spec(stft(w, cfg), w.sample_rate, cfg)


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, Spectrogram) else np.asarray(s, dtype=np.float64)


def log_spec(s, eps: float = LOG_EPS) -> FeatureMatrix:
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    return FeatureMatrix(10.0 * np.log10(_values(s) + eps), "log_spec")


def mel_scale(f):
    """Hz to mel: ``2595 * log10(1 + f / 700)``."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0):
        raise InvalidArgumentError("frequency must be non-negative")
    m = 2595.0 * np.log10(1.0 + f_arr / 700.0)
    return float(m) if np.ndim(m) == 0 else m


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(f) if np.ndim(f) == 0 else f


def mel_filterbank(
    n_mels: int = 64,
    window_len: int = 256,
    rate: int = 2000,
    f_min: float = 0.0,
    f_max: Optional[float] = None,
    mel_norm: str = "peak",
) -> MelFilterbank:
    """Triangular filters on bins, corners uniformly spaced in mel.

    ``n_mels + 2`` corner frequencies are spaced evenly between
    ``mel_scale(f_min)`` and ``mel_scale(f_max)`` and rounded to the nearest
    FFT bin. Each triangle rises from its left corner bin to 1 at its
    center bin and falls to 0 at its right corner bin, so neighbouring
    filters sum to exactly 1 between their centers. ``mel_norm="area"``
    rescales each row to unit sum instead.
    """
    if f_max is None:
        f_max = rate / 2.0
    if n_mels < 1:
        raise InvalidArgumentError("n_mels must be >= 1")
    if not (0 <= f_min < f_max <= rate / 2.0):
        raise InvalidArgumentError(f"need 0 <= f_min < f_max <= {rate / 2.0}")
    if mel_norm not in ("peak", "area"):
        raise InvalidArgumentError("mel_norm must be 'peak' or 'area'")
    n_bins = window_len // 2 + 1
    mels = np.linspace(mel_scale(f_min), mel_scale(f_max), n_mels + 2)
    hz = mel_to_hz(mels)
    bins = np.rint(hz * window_len / rate).astype(int)
    if np.any(np.diff(bins) < 1):
        raise ResolutionError(
            f"{n_mels} mel bands are too many for {n_bins} FFT bins: some filters would be empty"
        )
    k = np.arange(n_bins)
    weights = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, c, hi = bins[i], bins[i + 1], bins[i + 2]
        rise = (k - lo) / (c - lo)
        fall = (hi - k) / (hi - c)
        weights[i] = np.clip(np.minimum(rise, fall), 0.0, None)
    if mel_norm == "area":
        weights /= weights.sum(axis=1, keepdims=True)
    return MelFilterbank(weights, float(f_min), float(f_max), hz[1:-1])


def mel_spec(s, fb: MelFilterbank, eps: float = LOG_EPS) -> FeatureMatrix:
    S = _values(s)
    if S.ndim != 2 or S.shape[0] != fb.weights.shape[1]:
        raise DimensionError(
            f"filterbank expects {fb.weights.shape[1]} frequency bins, spectrogram has shape {S.shape}"
        )
    return FeatureMatrix(10.0 * np.log10(fb.weights @ S + eps), "mel_spec")


def time_average(f: FeatureMatrix) -> FeatureMatrix:
    if f.values.ndim != 2:
        raise InvalidArgumentError("time_average needs a [channels, frames] matrix")
    if f.values.shape[1] == 0:
        raise EmptySignalError("feature matrix has no frames")
    kind = f.kind if f.kind.endswith("_avg") else f.kind + "_avg"
    return FeatureMatrix(f.values.mean(axis=1), kind)


@dataclass(frozen=True)
class FeatureConfig:
    """Everything needed to turn a waveform segment into features."""

    kind: str = "mel"  # "log" or "mel"
    window_len: int = 256
    hop: int = 128
    n_mels: int = 64
    f_min: float = 0.0
    f_max: Optional[float] = None
    mel_norm: str = "peak"
    average: bool = False

    def __post_init__(self):
        if self.kind not in ("log", "mel"):
            raise InvalidArgumentError(f"feature kind must be 'log' or 'mel', got {self.kind!r}")


def extract(w: Waveform, cfg: FeatureConfig, fb: Optional[MelFilterbank] = None) -> FeatureMatrix:
    """Spectrogram features for one (already normalized) segment."""
    scfg = StftConfig(cfg.window_len, cfg.hop)
    S = spectrogram(w, scfg)
    if cfg.kind == "log":
        fm = log_spec(S)
    else:
        if fb is None:
            fb = mel_filterbank(cfg.n_mels, cfg.window_len, w.sample_rate, cfg.f_min, cfg.f_max, cfg.mel_norm)
        fm = mel_spec(S, fb)
    return time_average(fm) if cfg.average else fm


# Feature dump: 16-byte header then little-endian f64 payload, row-major.
DUMP_MAGIC = b"HNFM"
_DTYPE_F64LE = 1


def dump_features(f: FeatureMatrix, path, config: Optional[FeatureConfig] = None) -> None:
    """Write ``f`` as a binary matrix file plus a ``.json`` sidecar."""
    v = np.atleast_2d(f.values) if f.values.ndim == 1 else f.values
    if f.values.ndim == 1:
        v = v.T
    rows, cols = v.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC + struct.pack("<III", rows, cols, _DTYPE_F64LE))
        fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    side = {"kind": f.kind, "ndim": int(f.values.ndim)}
    if config is not None:
        side["config"] = asdict(config)
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != DUMP_MAGIC:
        raise InvalidArgumentError(f"{path}: not a feature dump")
    rows, cols, dtype = struct.unpack("<III", raw[4:16])
    if dtype != _DTYPE_F64LE or len(raw) != 16 + 8 * rows * cols:
        raise InvalidArgumentError(f"{path}: corrupt feature dump")
    v = np.frombuffer(raw[16:], dtype="<f8").reshape(rows, cols).astype(np.float64)
    side = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if side.get("ndim") == 1:
        v = v[:, 0]
    return FeatureMatrix(v, side["kind"])
