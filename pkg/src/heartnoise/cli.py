"""Command-line front end: ``heartnoise <subcommand> ...``.

Exit codes: 0 success, 2 usage or validation error, 3 refusal to overwrite
existing output (pass ``--force``), 4 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from .dataset import LABEL_TO_SIGN, build_dataset, check_no_leakage, gen_surrogate_heart_sound, load_physionet, read_manifest
from .errors import (
    DegenerateLabelsError,
    HeartNoiseError,
    InvalidArgumentError,
    LeakageError,
    RecipeError,
    SchemaError,
)
from .evaluate import ALL_FACETS, FACETS, aggregate_reports, derive_repeat_seeds, emit_report, facet_breakdown
from .features import dump_features
from .models.io import model_load, model_save
from .noise import COLOR_GENERATORS, default_catalog
from .pipeline import (
    ExperimentConfig,
    Featurizer,
    base_features,
    featurizer_for,
    labels_of,
    manifest_features,
    pool_predictions,
    segment_scores,
    train_cnn_model,
    train_svm_model,
)
from .recipe import load_recipe
from .signal import write_wav

log = logging.getLogger("heartnoise")

EXIT_OK, EXIT_USAGE, EXIT_EXISTS, EXIT_RUNTIME = 0, 2, 3, 4
MODEL_SUFFIX = ".hnm"
PREDICTIONS_HEADER = ["recording_id", "repeat", "label", "score"]


class UsageError(Exception):
    pass


class OverwriteRefused(Exception):
    pass


def kv(**fields) -> str:
    """``key=value`` tail for machine scraping."""
    return " ".join(f"{k}={v}" for k, v in fields.items())


def _guard(path: Path, force: bool) -> None:
    if path.exists() and not force:
        if path.is_dir() and not any(path.iterdir()):
            return
        raise OverwriteRefused(f"{path} already exists; pass --force to overwrite")


# -- subcommands --------------------------------------------------------------

def cmd_gen_noise(args) -> int:
    catalog = default_catalog()
    if args.type not in catalog:
        raise UsageError(f"unknown noise type {args.type!r}; choose from: {', '.join(catalog.names())}")
    out = Path(args.out)
    _guard(out, args.force)
    n = int(round(args.seconds * args.rate))
    w = catalog[args.type].render(n, args.rate, args.noise_seed)
    if len(w) < n and args.type not in COLOR_GENERATORS:
        log.info("short-duration noise %s rendered at its clip length %d", args.type, len(w))
    write_wav(w, out)
    print(f"wrote {out} {kv(type=args.type, samples=len(w), rate=args.rate, seed=args.noise_seed)}")
    return EXIT_OK


def cmd_gen_surrogate(args) -> int:
    out = Path(args.out)
    _guard(out, args.force)
    w = gen_surrogate_heart_sound(args.class_label, args.seconds, args.bpm, args.seed or 0, args.rate)
    write_wav(w, out)
    print(f"wrote {out} {kv(class_label=args.class_label, samples=len(w), bpm=args.bpm, seed=args.seed or 0)}")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    out = Path(args.out_dir)
    _guard(out, args.force)
    recipe = load_recipe(args.recipe, master_seed=args.seed)
    manifest = build_dataset(recipe, out, jobs=args.jobs)
    n_train = sum(1 for r in manifest.rows if r.split == "train")
    n_test = len(manifest) - n_train
    print(f"{len(manifest)} rows ({n_train} train / {n_test} test)")
    print(kv(rows=len(manifest), train=n_train, test=n_test, manifest=out / "manifest.csv"))
    return EXIT_OK


def cmd_extract_features(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = ExperimentConfig(
        manifest=args.manifest, feature=args.feature, model=args.model,
        segment_seconds=args.segment_seconds, min_keep_seconds=args.min_keep_seconds,
    )
    out = Path(args.out_dir)
    _guard(out, args.force)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r for r in manifest.rows if args.split in ("all", r.split)]
    fz = Featurizer(cfg.feature_config(), cfg.seg_seconds, cfg.min_keep_seconds)
    X, owners = manifest_features(manifest, rows, fz, jobs=args.jobs)
    from .features import FeatureMatrix

    kind = f"{args.feature}_spec" + ("_avg" if fz.cfg.average else "")
    counts: Dict[str, int] = {}
    for x, rid in zip(X, owners):
        k = counts.get(rid, 0)
        counts[rid] = k + 1
        dump_features(FeatureMatrix(x, kind), out / f"{rid}_s{k}.hnfm", fz.cfg)
    print(kv(recordings=len(counts), segments=len(owners), kind=kind, out=out))
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    path = args.config_file or args.config
    if not path:
        raise UsageError("train needs an experiment config (positional or --config)")
    cfg = ExperimentConfig.load(path)
    if args.pretrain:
        cfg.pretrain = dict(cfg.pretrain or {}, dir=args.pretrain)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    if args.repeats:
        cfg.repeats = args.repeats
    return cfg


def cmd_train(args) -> int:
    cfg = _experiment_config(args)
    manifest = read_manifest(cfg.manifest)
    check_no_leakage(manifest)
    out = Path(cfg.output_dir)
    names = ["model" + MODEL_SUFFIX] if cfg.repeats == 1 else [f"model_r{i:02d}{MODEL_SUFFIX}" for i in range(cfg.repeats)]
    for name in names:
        _guard(out / name, args.force)
    out.mkdir(parents=True, exist_ok=True)

    fz = Featurizer(cfg.feature_config(), cfg.seg_seconds, cfg.min_keep_seconds)
    rows = [r for r in manifest.rows if r.split == "train"]
    if not rows:
        raise RecipeError("manifest has no train rows")
    X, owners = manifest_features(manifest, rows, fz, jobs=args.jobs)
    y = labels_of(manifest, owners)
    lines = [kv(event="features", segments=len(owners), recordings=len(rows), shape="x".join(map(str, X.shape[1:])))]

    pretrain_data = None
    if cfg.model == "cnn" and cfg.pretrain:
        bases = load_physionet(cfg.pretrain["dir"])
        rate = int(manifest.recipe.get("sample_rate", 2000))
        Xp, owners_p = base_features(bases, fz, rate, jobs=args.jobs)
        by_id = {b.id: b for b in bases}
        import numpy as np

        yp = np.array([LABEL_TO_SIGN[by_id[o].class_label] for o in owners_p], dtype=int)
        pretrain_data = (Xp, yp)
        lines.append(kv(event="pretrain_data", recordings=len(bases), segments=len(yp)))

    seeds = derive_repeat_seeds(cfg.seed, cfg.repeats)
    for i, (seed, name) in enumerate(zip(seeds, names)):
        if cfg.model == "svm":
            tm = train_svm_model(cfg, fz, X, y, seed)
        else:
            tm = train_cnn_model(cfg, fz, X, y, seed, pretrain_data)
        model_save(tm.model, out / name)
        lines.extend(tm.log_lines)
        dim = tm.model.feature_dim if cfg.model == "svm" else "x".join(map(str, tm.model.input_shape))
        lines.append(kv(event="saved", repeat=i, model=out / name, feature_dim=dim, seed=seed))
    (out / "train.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    return EXIT_OK


def _model_paths(path: Path) -> List[Path]:
    if path.is_dir():
        found = sorted(path.glob(f"*{MODEL_SUFFIX}"))
        if not found:
            raise UsageError(f"no {MODEL_SUFFIX} files in {path}")
        return found
    if not path.exists():
        raise UsageError(f"model {path} does not exist")
    return [path]


def _parse_facets(spec: str) -> List[str]:
    items = [s.strip() for s in spec.split(",") if s.strip()]
    if items == ["all"]:
        return list(FACETS)
    bad = [s for s in items if s not in ALL_FACETS]
    if bad:
        raise UsageError(f"unknown facet(s) {', '.join(bad)}; choose from {', '.join(ALL_FACETS)} or all")
    return [f for f in items if f != "overall"]


def _write_reports(per_repeat: List[list], manifest, facets: Sequence[str], out: Path) -> dict:
    """``per_repeat`` holds one list of (recording_id, label) pairs per repeat."""
    written = {}
    for facet in list(facets) + ["overall"]:
        reports = [facet_breakdown(preds, manifest, facet) for preds in per_repeat]
        agg = aggregate_reports(reports)
        emit_report(agg, "csv", out / f"report_{facet}.csv")
        emit_report(agg, "json", out / f"report_{facet}.json")
        written[facet] = agg
    return written


def _print_overall(overall) -> None:
    cell = overall.groups["all"]
    print(
        f"overall accuracy={cell.accuracy:.4f} ± {cell.accuracy_std:.4f} "
        + kv(n=cell.n, repeats=overall.repeats, accuracy=f"{cell.accuracy:.6f}", accuracy_std=f"{cell.accuracy_std:.6f}")
    )


def cmd_evaluate(args) -> int:
    facets = _parse_facets(args.facets)
    manifest = read_manifest(args.manifest)
    paths = _model_paths(Path(args.model))
    if args.repeats:
        if args.repeats > len(paths):
            raise UsageError(
                f"--repeats {args.repeats} needs that many models; found {len(paths)} "
                "(train with \"repeats\" in the config)"
            )
        paths = paths[: args.repeats]
    out = Path(args.out)
    _guard(out / "predictions.csv", args.force)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r for r in manifest.rows if args.split in ("all", r.split)]
    if not rows:
        raise RecipeError(f"manifest has no {args.split} rows")

    buf = io.StringIO()
    pw = csv.writer(buf, lineterminator="\n")
    pw.writerow(PREDICTIONS_HEADER)
    per_repeat = []
    cache: Dict[tuple, tuple] = {}
    for i, p in enumerate(paths):
        model = model_load(p)
        fz = featurizer_for(model)
        key = (repr(fz.cfg), fz.seg_seconds, fz.min_keep_seconds)
        if key not in cache:
            cache[key] = manifest_features(manifest, rows, fz, jobs=args.jobs)
        X, owners = cache[key]
        scores = segment_scores(model, X)
        pooled = pool_predictions(owners, scores, args.unit)
        if args.unit == "segment":
            preds = [(rid, lab) for rid, lab, _ in pooled]
            for rid, lab, s in pooled:
                pw.writerow([rid, i, lab, repr(s)])
        else:
            preds = [(rid, lab) for rid, (lab, _) in pooled.items()]
            for rid, (lab, s) in pooled.items():
                pw.writerow([rid, i, lab, repr(s)])
        per_repeat.append(preds)
    (out / "predictions.csv").write_text(buf.getvalue(), encoding="utf-8")
    reports = _write_reports(per_repeat, manifest, facets, out)
    for f in facets:
        print(kv(facet=f, groups=len(reports[f].groups), n=sum(c.n for c in reports[f].groups.values())))
    _print_overall(reports["overall"])
    return EXIT_OK


def read_predictions(path) -> List[list]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PREDICTIONS_HEADER:
            raise SchemaError(f"{path}: predictions header must be {','.join(PREDICTIONS_HEADER)}")
        by_rep: Dict[int, list] = {}
        for row in reader:
            by_rep.setdefault(int(row["repeat"]), []).append((row["recording_id"], int(row["label"])))
    return [by_rep[k] for k in sorted(by_rep)]


def cmd_report(args) -> int:
    facets = _parse_facets(args.facets)
    manifest = read_manifest(args.manifest)
    per_repeat = read_predictions(args.predictions)
    if not per_repeat:
        raise SchemaError(f"{args.predictions} holds no predictions")
    out = Path(args.out)
    _guard(out / "report_overall.csv", args.force)
    out.mkdir(parents=True, exist_ok=True)
    reports = _write_reports(per_repeat, manifest, facets, out)
    _print_overall(reports["overall"])
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides config files)")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker threads (default: logical cores)")
    common.add_argument("--force", action="store_true", default=argparse.SUPPRESS, help="overwrite existing outputs")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="heartnoise", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"heartnoise {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-noise", parents=[common], help="synthesize one noise type to a WAV file")
    g.add_argument("type")
    g.add_argument("seconds", type=float)
    g.add_argument("rate", type=int)
    g.add_argument("noise_seed", type=int, metavar="seed")
    g.add_argument("out")
    g.set_defaults(func=cmd_gen_noise)

    s = sub.add_parser("gen-surrogate", parents=[common], help="synthesize a surrogate heart sound")
    s.add_argument("class_label", choices=["normal", "abnormal"])
    s.add_argument("seconds", type=float)
    s.add_argument("out")
    s.add_argument("--bpm", type=float, default=75.0)
    s.add_argument("--rate", type=int, default=2000)
    s.set_defaults(func=cmd_gen_surrogate)

    b = sub.add_parser("build-dataset", parents=[common], help="mix bases x noises x SNRs into a dataset")
    b.add_argument("recipe", help='recipe JSON, or "reference" for the bundled surrogate recipe')
    b.add_argument("out_dir")
    b.set_defaults(func=cmd_build_dataset)

    e = sub.add_parser("extract-features", parents=[common], help="dump per-segment features")
    e.add_argument("manifest")
    e.add_argument("out_dir")
    e.add_argument("--feature", choices=["log", "mel"], default="mel")
    e.add_argument("--model", choices=["svm", "cnn"], default="svm", help="selects segment length and averaging")
    e.add_argument("--segment-seconds", type=float, default=None)
    e.add_argument("--min-keep-seconds", type=float, default=2.0)
    e.add_argument("--split", choices=["train", "test", "all"], default="all")
    e.set_defaults(func=cmd_extract_features)

    t = sub.add_parser("train", parents=[common], help="train a model from an experiment config")
    t.add_argument("config_file", nargs="?", metavar="config.json")
    t.add_argument("--pretrain", metavar="DIR", help="PhysioNet-format directory for CNN pretraining")
    t.add_argument("--out", help="output directory (overrides output_dir)")
    t.add_argument("--repeats", type=int, help="number of independently seeded models")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("evaluate", parents=[common], help="predict and write facet reports")
    v.add_argument("model", help="model file, or a directory of model files (one per repeat)")
    v.add_argument("manifest")
    v.add_argument("--facets", default="all", help="comma-separated facets or 'all'")
    v.add_argument("--repeats", type=int)
    v.add_argument("--out", default="eval")
    v.add_argument("--split", choices=["train", "test", "all"], default="test")
    v.add_argument("--unit", choices=["recording", "segment"], default="recording")
    v.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", parents=[common], help="rebuild facet reports from a predictions CSV")
    r.add_argument("predictions")
    r.add_argument("manifest")
    r.add_argument("--facets", default="all")
    r.add_argument("--out", default="report")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    for name, default in (("seed", None), ("jobs", os.cpu_count() or 1), ("force", False),
                          ("config", None), ("verbose", 0)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except OverwriteRefused as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXISTS
    except (UsageError, SchemaError, RecipeError, LeakageError, InvalidArgumentError, DegenerateLabelsError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HeartNoiseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
