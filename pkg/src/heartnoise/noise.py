"""Color-noise synthesis, PSD slope validation and the noise catalog.

All generators draw from numpy's PCG64 bit generator seeded with the
``seed`` argument, so outputs are a deterministic function of
``(n, rate, seed)`` on every platform numpy supports.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Iterator, Optional

import numpy as np
from scipy.signal import welch

from . import standins
from .errors import (
    DuplicateNameError,
    InvalidArgumentError,
    InvalidBandError,
    MissingAssetError,
    SchemaError,
)
from .signal import Waveform, normalize_amplitude, read_wav, resample

GROUPINGS = ("color", "movement", "internal", "ambient")
DURATION_CLASSES = ("short", "long")
CATALOG_HEADER = ["name", "grouping", "duration_class", "source"]

WELCH_NPERSEG = 4096


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_n(n: int) -> int:
    n = int(n)
    if n <= 0:
        raise InvalidArgumentError("sample count must be positive")
    return n


def gen_white(n: int, rate: int, seed: int, peak_normalize: bool = True) -> Waveform:
    """I.i.d. standard Gaussian noise, peak-normalized unless told otherwise."""
    n = _check_n(n)
    w = Waveform(_rng(seed).standard_normal(n), rate)
    return normalize_amplitude(w) if peak_normalize else w


def _shaped(n: int, rate: int, seed: int, exponent: float) -> Waveform:
    """White noise with its amplitude spectrum scaled by ``f**-exponent``."""
    white = gen_white(n, rate, seed, peak_normalize=False).samples
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, d=1.0 / rate)
    scale = np.empty_like(f)
    if f.size > 1:
        scale[1:] = f[1:] ** -exponent
        scale[0] = scale[1]
    else:
        scale[:] = 1.0
    y = np.fft.irfft(spec * scale, n=n)
    return normalize_amplitude(Waveform(y, rate))


def gen_pink(n: int, rate: int, seed: int) -> Waveform:
    """1/f power noise (-3 dB/octave)."""
    return _shaped(_check_n(n), rate, seed, 0.5)


def gen_red(n: int, rate: int, seed: int) -> Waveform:
    """1/f^2 power noise (-6 dB/octave), a.k.a. brown noise."""
    return _shaped(_check_n(n), rate, seed, 1.0)


COLOR_GENERATORS = {"white": gen_white, "pink": gen_pink, "red": gen_red}


def psd_slope(w: Waveform, f_lo: float, f_hi: float) -> float:
    """Least-squares slope, in dB/octave, of the Welch PSD over [f_lo, f_hi].

    Welch uses Hann segments of 4096 samples at 50% overlap; at least eight
    segments are required.
    """
    nyq = w.sample_rate / 2.0
    if not (0 <= f_lo < f_hi <= nyq):
        raise InvalidBandError(f"need 0 <= f_lo < f_hi <= {nyq}, got [{f_lo}, {f_hi}]")
    min_len = WELCH_NPERSEG + 7 * (WELCH_NPERSEG // 2)
    if len(w) < min_len:
        raise InvalidArgumentError(f"need at least {min_len} samples for 8 Welch segments")
    f, p = welch(w.samples, fs=w.sample_rate, window="hann", nperseg=WELCH_NPERSEG)
    band = (f >= f_lo) & (f <= f_hi) & (f > 0)
    if not band.any():
        raise InvalidBandError("no frequency bins inside the requested band")
    pb = p[band]
    if not np.all(pb > 0) or pb.max() <= 1e-20 * max(p.max(), 1e-300):
        raise InvalidBandError("band has no spectral content")
    slope, _ = np.polyfit(np.log2(f[band]), 10.0 * np.log10(pb), 1)
    return float(slope)


@dataclass(frozen=True)
class NoiseSpec:
    """One noise source with its grouping and duration class.

    ``source`` is ``"synthetic"`` (color generator), ``"standin"`` (labeled
    synthetic stand-in for a recorded clip) or a path to a WAV file.
    """

    name: str
    grouping: str
    duration_class: str
    source: str = "synthetic"

    @property
    def is_file(self) -> bool:
        return self.source not in ("synthetic", "standin")

    def render(self, n: int, rate: int, seed: int) -> Waveform:
        """Produce noise for a recording of ``n`` samples at ``rate``.

        Long synthetic noises come back with exactly ``n`` samples; short
        stand-ins come back at their clip length (capped at ``n``); file
        sources come back at their natural length, resampled to ``rate``.
        The mixer tiles or places the result.
        """
        n = _check_n(n)
        if self.source == "synthetic":
            try:
                gen = COLOR_GENERATORS[self.name]
            except KeyError:
                raise SchemaError(f"no synthetic generator for noise {self.name!r}") from None
            return gen(n, rate, seed)
        if self.source == "standin":
            try:
                gen = standins.GENERATORS[self.name]
            except KeyError:
                raise SchemaError(f"no stand-in generator for noise {self.name!r}") from None
            m = n
            if self.duration_class == "short":
                m = min(n, max(1, int(round(standins.SHORT_CLIP_SECONDS.get(self.name, 1.0) * rate))))
            return normalize_amplitude(Waveform(gen(m, rate, _rng(seed)), rate))
        return resample(read_wav(self.source), rate)


class NoiseCatalog:
    """Ordered name -> :class:`NoiseSpec` mapping with unique names."""

    def __init__(self, entries=()):
        self.entries: Dict[str, NoiseSpec] = {}
        for spec in entries:
            if spec.name in self.entries:
                raise DuplicateNameError(f"duplicate noise name {spec.name!r}")
            self.entries[spec.name] = spec

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[NoiseSpec]:
        return iter(self.entries.values())

    def __getitem__(self, name: str) -> NoiseSpec:
        return self.entries[name]

    def __contains__(self, name) -> bool:
        return name in self.entries

    def names(self):
        return list(self.entries)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CATALOG_HEADER)
        for s in self:
            writer.writerow([s.name, s.grouping, s.duration_class, s.source])
        return buf.getvalue()


def _parse_catalog(text: str, base_dir: Optional[Path]) -> NoiseCatalog:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        return NoiseCatalog()
    if rows[0] != CATALOG_HEADER:
        raise SchemaError(f"catalog header must be {','.join(CATALOG_HEADER)!r}, got {rows[0]!r}")
    specs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise SchemaError(f"line {lineno}: expected 4 columns, got {len(row)}")
        name, grouping, dclass, source = (c.strip() for c in row)
        if grouping not in GROUPINGS:
            raise SchemaError(f"line {lineno}: unknown grouping {grouping!r}")
        if dclass not in DURATION_CLASSES:
            raise SchemaError(f"line {lineno}: unknown duration class {dclass!r}")
        if source not in ("synthetic", "standin"):
            path = Path(source)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            if not (path.is_file() and os.access(path, os.R_OK)):
                raise MissingAssetError(f"line {lineno}: noise file {str(path)!r} is not readable")
            source = str(path)
        specs.append(NoiseSpec(name, grouping, dclass, source))
    return NoiseCatalog(specs)


def catalog_load(dir=None, manifest=None) -> NoiseCatalog:
    """Load a catalog manifest CSV; relative file sources resolve under ``dir``.

    With no manifest, the bundled 21-entry default catalog is returned.
    """
    if manifest is None:
        return default_catalog()
    text = Path(manifest).read_text(encoding="utf-8")
    base = Path(dir) if dir is not None else Path(manifest).parent
    return _parse_catalog(text, base)


def default_catalog() -> NoiseCatalog:
    text = resources.files("heartnoise.data").joinpath("noise_catalog.csv").read_text(encoding="utf-8")
    return _parse_catalog(text, None)
