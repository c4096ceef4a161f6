"""Manifest-driven training and prediction.

Recordings are split into fixed-length segments (zero-padding the tail),
each segment is peak-normalized, and spectrogram features are computed per
segment. Predictions are made per segment and, by default, pooled to one
label per recording by averaging the segment scores.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import jsonschema
import numpy as np

from .dataset import LABEL_TO_SIGN, BaseRecording, DatasetManifest, ManifestRow
from .errors import DegenerateSignalError, SchemaError
from .evaluate import derive_repeat_seeds
from .features import FeatureConfig, MelFilterbank, extract, mel_filterbank
from .models.cnn import CnnModel, TrainConfig, cnn_init, cnn_predict_proba, cnn_train
from .models.svm import LinearModel, svm_train
from .signal import Waveform, normalize_amplitude, read_wav, resample, segment

log = logging.getLogger(__name__)

DEFAULT_SEGMENT_SECONDS = {"svm": 10.0, "cnn": 5.0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["manifest"],
    "additionalProperties": False,
    "properties": {
        "manifest": {"type": "string"},
        "feature": {"enum": ["log", "mel"]},
        "model": {"enum": ["svm", "cnn"]},
        "segment_seconds": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "min_keep_seconds": {"type": "number", "minimum": 0},
        "n_mels": {"type": "integer", "minimum": 1},
        "svm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "c": {"type": "number", "exclusiveMinimum": 0},
                "epochs": {"type": "integer", "minimum": 1},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "freeze": {"enum": ["none", "all_but_dense"]},
            },
        },
        "pretrain": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["dir"],
            "properties": {
                "dir": {"type": "string"},
                "epochs": {"type": "integer", "minimum": 0},
            },
        },
        "repeats": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "unit": {"enum": ["recording", "segment"]},
    },
}


@dataclass
class ExperimentConfig:
    manifest: str
    feature: str = "mel"
    model: str = "svm"
    segment_seconds: Optional[float] = None
    min_keep_seconds: float = 2.0
    n_mels: int = 64
    svm: dict = field(default_factory=lambda: {"c": 1.0, "epochs": 20})
    train: dict = field(default_factory=dict)
    pretrain: Optional[dict] = None
    repeats: int = 1
    seed: int = 0
    output_dir: str = "run"
    unit: str = "recording"

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"invalid experiment config: {exc.message}") from None
        cfg = cls(**doc)
        cfg.svm = {"c": 1.0, "epochs": 20, **(doc.get("svm") or {})}
        if base_dir is not None:
            cfg.manifest = str(_resolve(base_dir, cfg.manifest))
            cfg.output_dir = str(_resolve(base_dir, cfg.output_dir))
            if cfg.pretrain:
                cfg.pretrain = dict(cfg.pretrain, dir=str(_resolve(base_dir, cfg.pretrain["dir"])))
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(doc, path.parent)

    @property
    def seg_seconds(self) -> float:
        return self.segment_seconds or DEFAULT_SEGMENT_SECONDS[self.model]

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(kind=self.feature, n_mels=self.n_mels, average=self.model == "svm")

    def train_config(self, seed: int, freeze: str = "none", epochs: Optional[int] = None) -> TrainConfig:
        t = self.train
        return TrainConfig(
            learning_rate=t.get("learning_rate", 0.001),
            epochs=t.get("epochs", 10) if epochs is None else epochs,
            batch_size=t.get("batch_size", 32),
            seed=seed,
            freeze=freeze,
        )

    def finetune_freeze(self) -> str:
        return self.train.get("freeze", "all_but_dense" if self.pretrain else "none")


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


# -- segments and features --------------------------------------------------

def recording_segments(w: Waveform, seg_seconds: float, min_keep_seconds: float) -> List[Waveform]:
    """Segments of one recording, each peak-normalized; silent ones dropped."""
    out = []
    for s in segment(w, seg_seconds, min_keep_seconds):
        try:
            out.append(normalize_amplitude(s))
        except DegenerateSignalError:
            log.debug("dropping silent segment")
    return out


class Featurizer:
    """Caches the mel filterbank for one (config, rate) pair."""

    def __init__(self, cfg: FeatureConfig, seg_seconds: float, min_keep_seconds: float):
        self.cfg = cfg
        self.seg_seconds = seg_seconds
        self.min_keep_seconds = min_keep_seconds
        self._fb: Dict[int, MelFilterbank] = {}

    def filterbank(self, rate: int) -> Optional[MelFilterbank]:
        if self.cfg.kind != "mel":
            return None
        if rate not in self._fb:
            c = self.cfg
            self._fb[rate] = mel_filterbank(c.n_mels, c.window_len, rate, c.f_min, c.f_max, c.mel_norm)
        return self._fb[rate]

    def waveform(self, w: Waveform) -> List[np.ndarray]:
        fb = self.filterbank(w.sample_rate)
        return [extract(s, self.cfg, fb).values for s in recording_segments(w, self.seg_seconds, self.min_keep_seconds)]

    def recordings(self, waves: Sequence[Tuple[str, Callable[[], Waveform]]], jobs: int = 1):
        """Features for many recordings: returns (X, owner ids) in input order."""
        def one(item):
            key, load = item
            return key, self.waveform(load())

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                done = list(pool.map(one, waves))
        else:
            done = [one(it) for it in waves]
        owners, feats = [], []
        for key, fs in done:
            owners.extend([key] * len(fs))
            feats.extend(fs)
        X = np.stack(feats) if feats else np.zeros((0,))
        return X, owners


def manifest_features(manifest: DatasetManifest, rows: Sequence[ManifestRow], fz: Featurizer, jobs: int = 1):
    items = [(r.recording_id, (lambda r=r: read_wav(manifest.resolve(r)))) for r in rows]
    return fz.recordings(items, jobs)


def base_features(bases: Sequence[BaseRecording], fz: Featurizer, rate: int, jobs: int = 1):
    items = [(b.id, (lambda b=b: resample(b.waveform, rate))) for b in bases]
    return fz.recordings(items, jobs)


# -- training ----------------------------------------------------------------

@dataclass
class TrainedModel:
    model: object
    log_lines: List[str] = field(default_factory=list)


def _model_meta(cfg: ExperimentConfig, fz: Featurizer) -> dict:
    return {
        "feature": asdict(fz.cfg),
        "segment_seconds": cfg.seg_seconds,
        "min_keep_seconds": cfg.min_keep_seconds,
        "model": cfg.model,
    }


def train_svm_model(cfg: ExperimentConfig, fz: Featurizer, X, y, seed: int) -> TrainedModel:
    kind = f"{cfg.feature}_spec_avg"
    m = svm_train(X, y, c=cfg.svm["c"], epochs=cfg.svm["epochs"], seed=seed, feature_kind=kind)
    m.meta = _model_meta(cfg, fz)
    return TrainedModel(m, [f"trained svm feature_dim={m.feature_dim} n={len(y)} seed={seed}"])


def train_cnn_model(
    cfg: ExperimentConfig, fz: Featurizer, X, y, seed: int, pretrain_data=None
) -> TrainedModel:
    lines: List[str] = []
    kind = f"{cfg.feature}_spec"
    m = cnn_init(X.shape[1:], seed=seed, feature_kind=kind)

    def progress(phase):
        return lambda epoch, loss: lines.append(f"{phase} epoch={epoch} loss={loss:.6f}")

    if pretrain_data is not None:
        Xp, yp = pretrain_data
        epochs = (cfg.pretrain or {}).get("epochs", 60)
        pcfg = cfg.train_config(seed, "none", epochs)
        lines.append(f"pretrain n={len(yp)} epochs={epochs} lr={pcfg.learning_rate}")
        m = cnn_train(m, Xp, yp, pcfg, progress=progress("pretrain"))
    freeze = cfg.finetune_freeze()
    tcfg = cfg.train_config(seed + 1, freeze)
    if freeze == "all_but_dense":
        lines.append("frozen: conv1,conv2,conv3")
    lines.append(f"{'finetune' if pretrain_data is not None else 'train'} n={len(y)} epochs={tcfg.epochs} freeze={freeze}")
    m = cnn_train(m, X, y, tcfg, progress=progress("finetune" if pretrain_data is not None else "train"))
    m.meta = _model_meta(cfg, fz)
    return TrainedModel(m, lines)


def labels_of(manifest: DatasetManifest, owners: Sequence[str]) -> np.ndarray:
    rows = manifest.by_id()
    return np.array([LABEL_TO_SIGN[rows[o].class_label] for o in owners], dtype=int)


# -- prediction --------------------------------------------------------------

def featurizer_for(model) -> Featurizer:
    meta = model.meta
    if not meta:
        raise SchemaError("model file carries no feature configuration")
    return Featurizer(FeatureConfig(**meta["feature"]), meta["segment_seconds"], meta["min_keep_seconds"])


def segment_scores(model, X: np.ndarray) -> np.ndarray:
    """Abnormal-class score per segment: SVM decision value or CNN p(abnormal) - 0.5."""
    if isinstance(model, LinearModel):
        return model.decision_function(X)
    if isinstance(model, CnnModel):
        return cnn_predict_proba(model, X)[:, 1] - 0.5
    raise TypeError(type(model).__name__)


def pool_predictions(owners: Sequence[str], scores: np.ndarray, unit: str = "recording"):
    """Labels from segment scores: positive score means abnormal, ties normal.

    ``unit="recording"`` averages each recording's segment scores and returns
    ``{recording_id: (label, score)}``; ``unit="segment"`` returns one
    ``(recording_id, label, score)`` triple per segment.
    """
    if unit == "segment":
        return [(o, 1 if s > 0 else -1, float(s)) for o, s in zip(owners, scores)]
    acc: Dict[str, List[float]] = {}
    for o, s in zip(owners, scores):
        acc.setdefault(o, []).append(float(s))
    out = {}
    for o, ss in acc.items():
        mscore = float(np.mean(ss))
        out[o] = (1 if mscore > 0 else -1, mscore)
    return out
