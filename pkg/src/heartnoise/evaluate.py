"""Confusion counts, recall/accuracy, faceted breakdowns and report files.

Labels are -1 (normal) and +1 (abnormal); abnormal is the positive class.
Undefined metrics (a class with no support) raise instead of returning 0.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean, stdev
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from .dataset import DatasetManifest, ManifestRow, format_snr
from .errors import InvalidArgumentError, JoinError, RepeatError, UndefinedMetricError

NORMAL, ABNORMAL = -1, 1
FACETS = ("noise_type", "noise_grouping", "noise_duration", "snr_db", "signal_duration")
ALL_FACETS = FACETS + ("overall",)
REPORT_HEADER = ["facet", "group", "n", "accuracy", "recall_normal", "recall_abnormal", "accuracy_std"]
METRICS = ("accuracy", "recall_normal", "recall_abnormal")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    def relabeled(self) -> "ConfusionMatrix":
        """Same counts with normal treated as the positive class."""
        return ConfusionMatrix(tp=self.tn, fp=self.fn, tn=self.tp, fn=self.fp)


def _labels(a) -> np.ndarray:
    a = np.asarray(a)
    if not np.all(np.isin(a, (NORMAL, ABNORMAL))):
        raise InvalidArgumentError("labels must be -1 (normal) or +1 (abnormal)")
    return a


def confusion(predictions, truths) -> ConfusionMatrix:
    p, t = _labels(predictions), _labels(truths)
    if p.shape != t.shape:
        raise InvalidArgumentError(f"length mismatch: {p.size} predictions, {t.size} truths")
    if p.size == 0:
        raise InvalidArgumentError("no predictions")
    pos_p, pos_t = p == ABNORMAL, t == ABNORMAL
    return ConfusionMatrix(
        tp=int(np.sum(pos_p & pos_t)),
        fp=int(np.sum(pos_p & ~pos_t)),
        tn=int(np.sum(~pos_p & ~pos_t)),
        fn=int(np.sum(~pos_p & pos_t)),
    )


def recall(cm: ConfusionMatrix, positive: str = "abnormal") -> float:
    """TP / (TP + FN) for ``positive`` ("abnormal" or "normal")."""
    if positive == "normal":
        cm = cm.relabeled()
    elif positive != "abnormal":
        raise InvalidArgumentError(f"unknown class {positive!r}")
    support = cm.tp + cm.fn
    if support == 0:
        raise UndefinedMetricError(f"recall of the {positive} class is undefined: no {positive} samples")
    return cm.tp / support


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix is undefined")
    return (cm.tp + cm.tn) / cm.total


def _try(fn, *args) -> Optional[float]:
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


@dataclass
class FacetCell:
    """Metrics of one group. ``*_std`` are sample standard deviations over repeats."""

    n: int
    accuracy: float
    recall_normal: Optional[float]
    recall_abnormal: Optional[float]
    accuracy_std: float = 0.0
    recall_normal_std: Optional[float] = 0.0
    recall_abnormal_std: Optional[float] = 0.0
    confusion: Optional[ConfusionMatrix] = None

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "FacetCell":
        return cls(cm.total, accuracy(cm), _try(recall, cm, "normal"), _try(recall, cm, "abnormal"), confusion=cm)


@dataclass
class FacetReport:
    facet: str
    groups: Dict[str, FacetCell] = field(default_factory=dict)
    repeats: int = 1

    def keys(self) -> List[str]:
        return list(self.groups)

    def __getitem__(self, key) -> FacetCell:
        return self.groups[str(key)]


def facet_key(row: ManifestRow, facet: str, manifest: DatasetManifest) -> str:
    if facet == "noise_type":
        return row.noise_name
    if facet == "noise_grouping":
        return row.noise_grouping
    if facet == "noise_duration":
        return row.noise_duration_class
    if facet == "snr_db":
        return format_snr(row.snr_db)
    if facet == "signal_duration":
        return manifest.base_duration_class(row.base_id)
    if facet == "overall":
        return "all"
    raise InvalidArgumentError(f"unknown facet {facet!r}; choose from {', '.join(ALL_FACETS)}")


def _order(groups: Dict[str, FacetCell]) -> Dict[str, FacetCell]:
    """Ascending mean accuracy, ties broken by group key."""
    return dict(sorted(groups.items(), key=lambda kv: (kv[1].accuracy, kv[0])))


def facet_confusions(predictions: Mapping[str, int], manifest: DatasetManifest, facet: str):
    """Per-group confusion matrices over the rows that have predictions.

    ``predictions`` is a ``{recording_id: label}`` mapping or an iterable of
    ``(recording_id, label)`` pairs (several per recording when evaluating
    segments).
    """
    if facet not in ALL_FACETS:
        raise InvalidArgumentError(f"unknown facet {facet!r}; choose from {', '.join(ALL_FACETS)}")
    rows = manifest.by_id()
    acc: Dict[str, List] = {}
    items = predictions.items() if isinstance(predictions, Mapping) else predictions
    for rid, pred in items:
        row = rows.get(rid)
        if row is None:
            raise JoinError(f"prediction for {rid!r} has no manifest row")
        key = facet_key(row, facet, manifest)
        acc.setdefault(key, [[], []])
        acc[key][0].append(int(pred))
        acc[key][1].append(1 if row.class_label == "abnormal" else -1)
    return {k: confusion(p, t) for k, (p, t) in acc.items()}


def facet_breakdown(predictions: Mapping[str, int], manifest: DatasetManifest, facet: str) -> FacetReport:
    """Accuracy and per-class recall for each group of ``facet``.

    ``predictions`` maps recording id to a label in {-1, +1}. Groups are
    ordered by ascending accuracy (ties by key).
    """
    cms = facet_confusions(predictions, manifest, facet)
    cells = {k: FacetCell.from_confusion(cm) for k, cm in cms.items()}
    return FacetReport(facet, _order(cells), 1)


def _agg(values: Sequence[Optional[float]]):
    if any(v is None for v in values):
        return None, None
    m = mean(values)
    return m, (stdev(values) if len(values) > 1 else 0.0)


def aggregate_reports(reports: Sequence[FacetReport]) -> FacetReport:
    """Mean and sample std (n-1) per cell across repeat reports."""
    if not reports:
        raise InvalidArgumentError("no reports to aggregate")
    facet = reports[0].facet
    keys = sorted(set().union(*(r.groups for r in reports)))
    cells = {}
    for k in keys:
        per = [r.groups[k] for r in reports if k in r.groups]
        acc_m, acc_s = _agg([c.accuracy for c in per])
        rn_m, rn_s = _agg([c.recall_normal for c in per])
        ra_m, ra_s = _agg([c.recall_abnormal for c in per])
        cells[k] = FacetCell(per[0].n, acc_m, rn_m, ra_m, acc_s, rn_s, ra_s)
    return FacetReport(facet, _order(cells), len(reports))


def derive_repeat_seeds(master_seed: int, n_repeats: int) -> List[int]:
    ss = np.random.SeedSequence(master_seed)
    return [int(s.generate_state(1, dtype=np.uint64)[0] >> 1) for s in ss.spawn(n_repeats)]


def repeat_experiment(
    experiment: Callable[[int], Mapping[str, int]],
    manifest: DatasetManifest,
    facets: Sequence[str] = ("overall",),
    n_repeats: int = 10,
    master_seed: int = 0,
) -> Dict[str, FacetReport]:
    """Run ``experiment(seed)`` ``n_repeats`` times and aggregate facet reports.

    ``experiment`` trains and predicts with the given seed, returning
    ``{recording_id: label}``. Seeds come from ``master_seed``. Each cell
    holds the mean and sample standard deviation (0 for a single repeat).
    """
    if n_repeats < 1:
        raise InvalidArgumentError("n_repeats must be >= 1")
    per_facet: Dict[str, List[FacetReport]] = {f: [] for f in facets}
    for i, seed in enumerate(derive_repeat_seeds(master_seed, n_repeats)):
        try:
            preds = experiment(seed)
            for f in facets:
                per_facet[f].append(facet_breakdown(preds, manifest, f))
        except Exception as exc:
            raise RepeatError(i, exc) from exc
    return {f: aggregate_reports(rs) for f, rs in per_facet.items()}


# -- serialization -----------------------------------------------------------

def _fmt(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.6f}"


def report_records(r: FacetReport) -> List[dict]:
    return [
        {
            "facet": r.facet,
            "group": k,
            "n": c.n,
            "accuracy": None if c.accuracy is None else round(c.accuracy, 6),
            "recall_normal": None if c.recall_normal is None else round(c.recall_normal, 6),
            "recall_abnormal": None if c.recall_abnormal is None else round(c.recall_abnormal, 6),
            "accuracy_std": None if c.accuracy_std is None else round(c.accuracy_std, 6),
        }
        for k, c in r.groups.items()
    ]


def report_to_csv(r: FacetReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for k, c in r.groups.items():
        w.writerow([
            r.facet, k, c.n, _fmt(c.accuracy), _fmt(c.recall_normal), _fmt(c.recall_abnormal), _fmt(c.accuracy_std),
        ])
    return buf.getvalue()


def report_to_json(r: FacetReport) -> str:
    doc = {"facet": r.facet, "repeats": r.repeats, "groups": report_records(r)}
    return json.dumps(doc, indent=2) + "\n"


def emit_report(r: FacetReport, format: str, path) -> None:
    if format == "csv":
        text = report_to_csv(r)
    elif format == "json":
        text = report_to_json(r)
    else:
        raise InvalidArgumentError(f"unknown report format {format!r}")
    Path(path).write_text(text, encoding="utf-8")


def parse_report_csv(text: str) -> FacetReport:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != REPORT_HEADER:
        raise InvalidArgumentError("not a facet report CSV")
    groups = {}
    facet = ""

    def num(s):
        return None if s == "" else float(s)

    for row in reader:
        facet = row["facet"]
        groups[row["group"]] = FacetCell(
            int(row["n"]), num(row["accuracy"]), num(row["recall_normal"]),
            num(row["recall_abnormal"]), num(row["accuracy_std"]),
        )
    return FacetReport(facet, groups)


def parse_report_json(text: str) -> FacetReport:
    doc = json.loads(text)
    groups = {
        g["group"]: FacetCell(g["n"], g["accuracy"], g["recall_normal"], g["recall_abnormal"], g["accuracy_std"])
        for g in doc["groups"]
    }
    return FacetReport(doc["facet"], groups, doc.get("repeats", 1))
