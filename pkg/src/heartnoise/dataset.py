"""Synthetic noisy heart-sound dataset construction.

A recipe crosses every base recording with every catalog noise and every
SNR level. Each (base, noise, snr) row gets its own seed, derived by
hashing ``(master_seed, base_id, noise_name, snr)``, so adding a noise
type or SNR level later leaves existing rows untouched.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import butter, sosfilt

from .errors import InvalidArgumentError, LeakageError, RecipeError, SchemaError
from .mixer import CROP, FULL_OVERLAP, RANDOM_OFFSET, TILE, MixRequest, mix_at_snr
from .noise import NoiseCatalog, NoiseSpec
from .signal import CANONICAL_RATE, Waveform, normalize_amplitude, read_wav, resample, write_wav

log = logging.getLogger(__name__)

CLASS_LABELS = ("normal", "abnormal")
LABEL_TO_SIGN = {"normal": -1, "abnormal": 1}
SIGN_TO_LABEL = {-1: "normal", 1: "abnormal"}
SHORT_RECORDING_SECONDS = 5.0
DEFAULT_SNR_LADDER = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0)
REFERENCE_TRAIN_IDS = frozenset({1, 3, 6, 8, 9, 11, 12, 15})
REFERENCE_TEST_IDS = frozenset({2, 4, 5, 7, 10, 13, 14, 16})

# (id, class, subtype, duration in seconds) of the 16 clean recordings the
# synthetic recipe is defined over. Surrogates reproduce class and length.
REFERENCE_BASES = (
    (1, "normal", "", 12.0),
    (2, "normal", "", 10.1),
    (3, "normal", "", 13.8),
    (4, "normal", "", 10.0),
    (5, "normal", "", 3.0),
    (6, "normal", "", 12.8),
    (7, "normal", "", 10.2),
    (8, "normal", "", 15.0),
    (9, "abnormal", "Aortic regurgitation", 12.0),
    (10, "abnormal", "Aortic stenosis", 10.9),
    (11, "abnormal", "Mitral regurgitation", 12.0),
    (12, "abnormal", "Mitral stenosis", 11.2),
    (13, "abnormal", "Mitral valve prolapse", 11.5),
    (14, "abnormal", "Mitral valve prolapse", 2.5),
    (15, "abnormal", "S3", 10.1),
    (16, "abnormal", "S4", 10.0),
)

MANIFEST_HEADER = [
    "recording_id", "base_id", "class_label", "noise_name", "noise_grouping",
    "noise_duration_class", "snr_db", "offset_samples", "gain", "seed", "split", "path",
]


def duration_class_of(seconds: float) -> str:
    return "short" if seconds < SHORT_RECORDING_SECONDS else "long"


@dataclass(frozen=True, eq=False)
class BaseRecording:
    id: int
    class_label: str
    waveform: Waveform
    subtype: str = ""
    source: str = ""

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise InvalidArgumentError(f"class_label must be one of {CLASS_LABELS}, got {self.class_label!r}")

    @property
    def duration_class(self) -> str:
        return duration_class_of(self.waveform.duration_seconds)


# -- surrogate heart sounds ------------------------------------------------

def _damped(t: np.ndarray, freq: float, tau: float) -> np.ndarray:
    return np.exp(-t / tau) * np.sin(2 * np.pi * freq * t)


def gen_surrogate_heart_sound(
    class_label: str,
    duration_s: float,
    heart_rate_bpm: float,
    seed: int,
    rate: int = CANONICAL_RATE,
) -> Waveform:
    """Synthetic phonocardiogram stand-in for tests and demos.

    Each full cardiac cycle holds an S1 (damped ~40 Hz sinusoid) at its
    start and an S2 (damped ~60 Hz) 0.3 cycle later. The abnormal class adds
    a 120-400 Hz systolic murmur between S1 and S2. A faint low-passed noise
    floor keeps every window non-silent. These parameters are invented; the
    output only mimics the gross structure of a real PCG.
    """
    if class_label not in CLASS_LABELS:
        raise InvalidArgumentError(f"unknown class {class_label!r}")
    if duration_s <= 0:
        raise InvalidArgumentError("duration_s must be positive")
    if not 30 <= heart_rate_bpm <= 200:
        raise InvalidArgumentError("heart_rate_bpm must lie in [30, 200]")
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(round(duration_s * rate))
    cycle = 60.0 / heart_rate_bpm
    n_cycles = int(math.floor(duration_s / cycle + 1e-9))

    f1 = 40.0 * rng.uniform(0.9, 1.1)
    f2 = 60.0 * rng.uniform(0.9, 1.1)
    x = np.zeros(n)
    ev_len = int(0.15 * rate)
    t_ev = np.arange(ev_len) / rate
    s1 = _damped(t_ev, f1, 0.025)
    s2 = _damped(t_ev, f2, 0.018)

    murmur_sos = butter(4, [120.0, min(400.0, 0.45 * rate)], btype="bandpass", fs=rate, output="sos")
    murmur_noise = sosfilt(murmur_sos, rng.standard_normal(n))
    murmur_noise /= np.max(np.abs(murmur_noise)) or 1.0

    for k in range(n_cycles):
        amp1 = rng.uniform(0.85, 1.0)
        amp2 = rng.uniform(0.5, 0.7)
        i1 = int(round(k * cycle * rate))
        i2 = int(round((k * cycle + 0.3 * cycle) * rate))
        for i, ev, a in ((i1, s1, amp1), (i2, s2, amp2)):
            j = min(i + ev_len, n)
            x[i:j] += a * ev[: j - i]
        if class_label == "abnormal":
            m0 = i1 + int(0.06 * rate)
            m1 = i2 - int(0.01 * rate)
            if m1 > m0:
                env = np.bartlett(m1 - m0)
                x[m0:m1] += 0.5 * env * murmur_noise[m0:m1]

    floor_sos = butter(2, min(200.0, 0.45 * rate), btype="lowpass", fs=rate, output="sos")
    x += 0.005 * sosfilt(floor_sos, rng.standard_normal(n))
    return normalize_amplitude(Waveform(x, rate))


def reference_surrogate_bases(seed: int = 0, rate: int = CANONICAL_RATE) -> List[BaseRecording]:
    """16 surrogate bases matching the class and length of the reference set."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for base_id, label, subtype, dur in REFERENCE_BASES:
        hr = float(rng.uniform(60.0, 90.0))
        sub_seed = int(rng.integers(0, 2**31 - 1))
        w = gen_surrogate_heart_sound(label, dur, hr, sub_seed, rate)
        out.append(BaseRecording(base_id, label, w, subtype or label, source="surrogate"))
    return out


# -- manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class ManifestRow:
    recording_id: str
    base_id: int
    class_label: str
    noise_name: str
    noise_grouping: str
    noise_duration_class: str
    snr_db: float
    offset_samples: int
    gain: float
    seed: int
    split: str
    path: str

    def to_csv_row(self) -> List[str]:
        return [
            self.recording_id, str(self.base_id), self.class_label, self.noise_name,
            self.noise_grouping, self.noise_duration_class, format_snr(self.snr_db),
            str(self.offset_samples), repr(float(self.gain)), str(self.seed), self.split, self.path,
        ]

    @classmethod
    def from_csv_row(cls, row: Dict[str, str]) -> "ManifestRow":
        try:
            return cls(
                row["recording_id"], int(row["base_id"]), row["class_label"], row["noise_name"],
                row["noise_grouping"], row["noise_duration_class"], float(row["snr_db"]),
                int(row["offset_samples"]), float(row["gain"]), int(row["seed"]), row["split"], row["path"],
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"bad manifest row {row!r}: {exc}") from exc


def format_snr(snr: float) -> str:
    return f"{snr:g}"


@dataclass
class DatasetManifest:
    """Manifest rows plus per-base metadata from the recipe sidecar.

    ``root`` is the directory relative paths in ``rows`` resolve against.
    """

    rows: List[ManifestRow] = field(default_factory=list)
    bases: Dict[int, dict] = field(default_factory=dict)
    root: Optional[Path] = None
    recipe: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def by_id(self) -> Dict[str, ManifestRow]:
        return {r.recording_id: r for r in self.rows}

    def base_duration_class(self, base_id: int) -> str:
        try:
            return self.bases[base_id]["duration_class"]
        except KeyError:
            raise SchemaError(f"no duration metadata for base {base_id}") from None

    def subset(self, rows: Iterable[ManifestRow]) -> "DatasetManifest":
        rows = list(rows)
        ids = {r.base_id for r in rows}
        return DatasetManifest(rows, {k: v for k, v in self.bases.items() if k in ids}, self.root, self.recipe)

    def resolve(self, row: ManifestRow) -> Path:
        p = Path(row.path)
        return p if p.is_absolute() or self.root is None else self.root / p

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in self.rows:
            writer.writerow(r.to_csv_row())
        return buf.getvalue()

    def write(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        sidecar = dict(self.recipe)
        sidecar["bases"] = [dict(v, id=k) for k, v in sorted(self.bases.items())]
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sidecar_path(manifest_path) -> Path:
    p = Path(manifest_path)
    return p.with_suffix(".json")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != MANIFEST_HEADER:
        raise SchemaError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
    rows = [ManifestRow.from_csv_row(r) for r in reader]
    bases: Dict[int, dict] = {}
    recipe: dict = {}
    side = sidecar_path(path)
    if side.exists():
        recipe = json.loads(side.read_text(encoding="utf-8"))
        for b in recipe.pop("bases", []):
            b = dict(b)
            bases[int(b.pop("id"))] = b
    return DatasetManifest(rows, bases, path.parent, recipe)


# -- recipe and build ------------------------------------------------------

@dataclass
class DatasetRecipe:
    bases: Sequence[BaseRecording]
    catalog: NoiseCatalog
    train_base_ids: frozenset
    test_base_ids: frozenset
    snr_levels_db: Sequence[float] = DEFAULT_SNR_LADDER
    master_seed: int = 0
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        self.train_base_ids = frozenset(int(i) for i in self.train_base_ids)
        self.test_base_ids = frozenset(int(i) for i in self.test_base_ids)
        overlap = self.train_base_ids & self.test_base_ids
        if overlap:
            raise LeakageError(f"base ids in both splits: {sorted(overlap)}")
        if len({float(s) for s in self.snr_levels_db}) != len(self.snr_levels_db):
            raise RecipeError("duplicate SNR levels")

    def split_of(self, base_id: int) -> str:
        if base_id in self.train_base_ids:
            return "train"
        if base_id in self.test_base_ids:
            return "test"
        raise RecipeError(f"base id {base_id} is in neither the train nor the test split")


def row_seed(master_seed: int, base_id: int, noise_name: str, snr_db: float) -> int:
    """63-bit seed from SHA-256 of ``"master|base|noise|snr"``."""
    key = f"{int(master_seed)}|{int(base_id)}|{noise_name}|{format_snr(float(snr_db))}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def recording_id(base_id: int, noise_name: str, snr_db: float) -> str:
    return f"b{base_id:03d}_{noise_name}_snr{format_snr(float(snr_db))}"


def placement_for(spec: NoiseSpec) -> Tuple[str, str]:
    """Short noises land at a random offset; long noises cover the recording."""
    if spec.duration_class == "short":
        return RANDOM_OFFSET, CROP
    return FULL_OVERLAP, TILE


def mix_row(base: BaseRecording, spec: NoiseSpec, snr_db: float, seed: int):
    """Render the noise for one row and mix it. Returns the MixResult."""
    noise_seed, place_seed = np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64)
    w = base.waveform
    noise = spec.render(len(w), w.sample_rate, int(noise_seed))
    placement, policy = placement_for(spec)
    return mix_at_snr(MixRequest(w, noise, float(snr_db), placement, int(place_seed), policy))


def _prepare_bases(recipe: DatasetRecipe) -> List[BaseRecording]:
    out = []
    seen = set()
    for b in recipe.bases:
        if b.id in seen:
            raise RecipeError(f"duplicate base id {b.id}")
        seen.add(b.id)
        recipe.split_of(b.id)
        w = resample(b.waveform, recipe.sample_rate)
        out.append(replace(b, waveform=normalize_amplitude(w)))
    return sorted(out, key=lambda b: b.id)


def build_dataset(recipe: DatasetRecipe, out_dir, jobs: int = 1) -> DatasetManifest:
    """Mix every (base, noise, snr) triple, write WAVs and ``manifest.csv``.

    Rows are ordered by base id, then catalog order, then SNR ladder order,
    whatever ``jobs`` is.
    """
    if len(recipe.catalog) == 0:
        raise RecipeError("noise catalog is empty")
    bases = _prepare_bases(recipe)
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)

    tasks = [(b, spec, float(snr)) for b in bases for spec in recipe.catalog for snr in recipe.snr_levels_db]

    def run(task) -> Tuple[ManifestRow, int]:
        base, spec, snr = task
        seed = row_seed(recipe.master_seed, base.id, spec.name, snr)
        res = mix_row(base, spec, snr, seed)
        rid = recording_id(base.id, spec.name, snr)
        rel = f"wavs/{rid}.wav"
        clipped = write_wav(res.mixed, out_dir / rel, warn=False)
        row = ManifestRow(
            rid, base.id, base.class_label, spec.name, spec.grouping, spec.duration_class,
            snr, res.offset_samples, res.gain, seed, recipe.split_of(base.id), rel,
        )
        return row, clipped

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(run, tasks))
    else:
        done = [run(t) for t in tasks]
    rows = [row for row, _ in done]
    n_clipped = sum(1 for _, c in done if c)
    if n_clipped:
        log.warning(
            "%d of %d recordings were hard-clipped at WAV write (%d samples total)",
            n_clipped, len(rows), sum(c for _, c in done),
        )

    base_meta = {
        b.id: {
            "class_label": b.class_label,
            "subtype": b.subtype,
            "duration_s": round(b.waveform.duration_seconds, 6),
            "duration_class": b.duration_class,
            "source": b.source,
        }
        for b in bases
    }
    recipe_meta = {
        "master_seed": recipe.master_seed,
        "sample_rate": recipe.sample_rate,
        "snr_levels_db": [float(s) for s in recipe.snr_levels_db],
        "train_base_ids": sorted(recipe.train_base_ids),
        "test_base_ids": sorted(recipe.test_base_ids),
        "catalog": [
            {"name": s.name, "grouping": s.grouping, "duration_class": s.duration_class, "source": s.source}
            for s in recipe.catalog
        ],
        "snr_power": "mean square over the noise-active region",
    }
    manifest = DatasetManifest(rows, base_meta, out_dir, recipe_meta)
    manifest.write(out_dir / "manifest.csv")
    log.info("built %d rows in %s", len(rows), out_dir)
    return manifest


def split_train_test(manifest: DatasetManifest, train_ids, test_ids) -> Tuple[DatasetManifest, DatasetManifest]:
    """Partition rows by base id; raises if a base would land on both sides."""
    train_ids, test_ids = set(train_ids), set(test_ids)
    overlap = train_ids & test_ids
    if overlap:
        raise LeakageError(f"base ids in both splits: {sorted(overlap)}")
    missing = {r.base_id for r in manifest.rows} - train_ids - test_ids
    if missing:
        raise RecipeError(f"base ids not assigned to a split: {sorted(missing)}")
    train = manifest.subset(r for r in manifest.rows if r.base_id in train_ids)
    test = manifest.subset(r for r in manifest.rows if r.base_id in test_ids)
    return train, test


def check_no_leakage(manifest: DatasetManifest) -> None:
    splits: Dict[int, set] = {}
    for r in manifest.rows:
        splits.setdefault(r.base_id, set()).add(r.split)
    leaked = sorted(b for b, s in splits.items() if len(s) > 1)
    if leaked:
        raise LeakageError(f"base ids in both splits: {leaked}")


# -- PhysioNet-format corpora ---------------------------------------------

REFERENCE_NAMES = ("REFERENCE.csv", "reference.csv")
UNSURE_QUALITY = {"0", "unsure"}


def _read_reference(path: Path) -> Dict[str, Tuple[int, Optional[str]]]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip()]
    if rows and rows[0][0].strip().lower() == "stem":
        rows = rows[1:]
    for row in rows:
        if len(row) < 2:
            raise SchemaError(f"{path}: row {row!r} needs stem and label")
        stem = row[0].strip()
        try:
            label = int(row[1])
        except ValueError:
            raise SchemaError(f"{path}: label {row[1]!r} for {stem} is not an integer") from None
        if label not in (-1, 1):
            raise SchemaError(f"{path}: label {label} for {stem} is outside {{-1, 1}}")
        quality = row[2].strip().lower() if len(row) > 2 else None
        out[stem] = (label, quality)
    return out


def load_physionet(dir) -> List[BaseRecording]:
    """Load a directory of WAVs labeled by a ``stem,label[,quality]`` CSV.

    Labels are -1 (normal) / 1 (abnormal). Rows whose quality is ``0`` or
    ``unsure`` are excluded. WAVs with no reference row are skipped with a
    warning. Recordings get ids 1..n in sorted stem order; the stem is kept
    in ``source``.
    """
    d = Path(dir)
    ref = next((d / n for n in REFERENCE_NAMES if (d / n).is_file()), None)
    if ref is None:
        raise SchemaError(f"{d}: no REFERENCE.csv")
    labels = _read_reference(ref)
    out = []
    for wav in sorted(d.glob("*.wav")):
        stem = wav.stem
        if stem not in labels:
            log.warning("skipping %s: no reference row", wav.name)
            continue
        label, quality = labels[stem]
        if quality in UNSURE_QUALITY:
            continue
        out.append(BaseRecording(len(out) + 1, SIGN_TO_LABEL[label], read_wav(wav), "", source=stem))
    return out
