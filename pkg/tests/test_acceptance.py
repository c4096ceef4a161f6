"""Acceptance criteria 1-10, each checked at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (shown in the pytest
terminal summary) before asserting.
"""
import math
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.signal import get_window, welch

from heartnoise.cli import main
from heartnoise.dataset import (
    LABEL_TO_SIGN,
    REFERENCE_TEST_IDS,
    REFERENCE_TRAIN_IDS,
    build_dataset,
    mix_row,
    reference_surrogate_bases,
    row_seed,
)
from heartnoise.evaluate import (
    ALL_FACETS,
    ConfusionMatrix,
    accuracy,
    facet_breakdown,
    recall,
    repeat_experiment,
)
from heartnoise.features import frame_count, mel_scale, power_spec, stft
from heartnoise.models.cnn import TrainConfig, cnn_init, cnn_train
from heartnoise.models.io import model_to_bytes
from heartnoise.noise import default_catalog, gen_pink, gen_red, gen_white
from heartnoise.pipeline import (
    ExperimentConfig,
    Featurizer,
    labels_of,
    manifest_features,
    pool_predictions,
    segment_scores,
    train_svm_model,
)
from heartnoise.recipe import load_recipe
from heartnoise.signal import Waveform, normalize_amplitude
from helpers import fd_gradient_error, two_cluster_images

REFERENCE_LADDER = [-10, -5, 0, 5, 10, 15, 20, 25, 30, 40]


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("ac_build")
    t0 = time.perf_counter()
    manifest = build_dataset(load_recipe("reference"), out)
    return out, manifest, time.perf_counter() - t0


def _welch_slope(x, rate=2000, lo=20.0, hi=800.0):
    f, p = welch(x, rate, nperseg=4096)
    band = (f >= lo) & (f <= hi)
    return np.polyfit(np.log2(f[band]), 10 * np.log10(p[band]), 1)[0]


def _svm_test_predictions(manifest, seed):
    cfg = ExperimentConfig(manifest="", feature="mel", model="svm")
    fz = Featurizer(cfg.feature_config(), cfg.seg_seconds, cfg.min_keep_seconds)
    train = [r for r in manifest.rows if r.split == "train"]
    test = [r for r in manifest.rows if r.split == "test"]
    X, owners = manifest_features(manifest, train, fz)
    model = train_svm_model(cfg, fz, X, labels_of(manifest, owners), seed).model
    Xt, owners_t = manifest_features(manifest, test, fz)
    pooled = pool_predictions(owners_t, segment_scores(model, Xt))
    return {rid: lab for rid, (lab, _) in pooled.items()}, model


# 1 -----------------------------------------------------------------------

def test_ac01_recipe_counts(built, acceptance):
    _, m, elapsed = built
    per_base = {}
    for r in m.rows:
        per_base[r.base_id] = per_base.get(r.base_id, 0) + 1
    test = [r for r in m.rows if r.split == "test"]
    per_noise = {}
    per_snr = {}
    for r in test:
        per_noise[r.noise_name] = per_noise.get(r.noise_name, 0) + 1
        per_snr[r.snr_db] = per_snr.get(r.snr_db, 0) + 1
    n_train = sum(r.split == "train" for r in m.rows)
    ok = (
        len(m) == 3360
        and set(per_base.values()) == {210} and len(per_base) == 16
        and n_train == 1680 and len(test) == 1680
        and len(per_noise) == 21 and set(per_noise.values()) == {80}
        and sorted(per_snr) == REFERENCE_LADDER and set(per_snr.values()) == {168}
        and elapsed < 300
    )
    acceptance(1, ok, f"rows={len(m)} per_base={sorted(set(per_base.values()))} train/test={n_train}/{len(test)} "
                      f"per_noise={sorted(set(per_noise.values()))} per_snr={sorted(set(per_snr.values()))} "
                      f"build={elapsed:.1f}s")
    assert ok


# 2 -----------------------------------------------------------------------

def test_ac02_snr_fidelity(acceptance):
    t0 = time.perf_counter()
    bases = reference_surrogate_bases(0)
    bases = [type(b)(b.id, b.class_label, normalize_amplitude(b.waveform), b.subtype) for b in bases]
    catalog = list(default_catalog())
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        base = bases[rng.integers(len(bases))]
        spec = catalog[rng.integers(len(catalog))]
        snr = float(rng.choice(REFERENCE_LADDER))
        res = mix_row(base, spec, snr, row_seed(0, base.id, spec.name, snr))
        # oracle: recompute from the output, independent of the mixer's own report
        lo, hi = res.offset_samples, res.offset_samples + res.active_samples
        clean = base.waveform.samples[lo:hi]
        added = res.mixed.samples[lo:hi] - clean
        measured = 10 * math.log10(np.mean(clean ** 2) / np.mean(added ** 2))
        worst = max(worst, abs(measured - snr))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.05 and elapsed < 60
    acceptance(2, ok, f"max |measured - target| = {worst:.2e} dB over 100 triples ({elapsed:.1f}s)")
    assert ok


# 3 -----------------------------------------------------------------------

def test_ac03_color_slopes(acceptance):
    t0 = time.perf_counter()
    n = 2 ** 18
    rows = []
    ok = True
    for seed in range(10):
        s = [_welch_slope(g(n, 2000, seed).samples) for g in (gen_white, gen_pink, gen_red)]
        rows.append(s)
        ok &= abs(s[0]) <= 0.5 and abs(s[1] + 3) <= 0.5 and abs(s[2] + 6) <= 0.5 and s[0] > s[1] > s[2]
    rows = np.array(rows)
    elapsed = time.perf_counter() - t0
    ok = bool(ok) and elapsed < 60
    acceptance(3, ok, "slopes dB/oct white [{:.2f},{:.2f}] pink [{:.2f},{:.2f}] red [{:.2f},{:.2f}] ({:.1f}s)".format(
        rows[:, 0].min(), rows[:, 0].max(), rows[:, 1].min(), rows[:, 1].max(),
        rows[:, 2].min(), rows[:, 2].max(), elapsed))
    assert ok


# 4 -----------------------------------------------------------------------

def test_ac04_feature_exactness(acceptance):
    t0 = time.perf_counter()
    direct = {f: 2595.0 * math.log10(1.0 + f / 700.0) for f in (700.0, 1000.0)}
    mel_ok = mel_scale(0.0) == 0.0 and all(abs(mel_scale(f) - v) <= 1e-9 * v for f, v in direct.items())
    X = stft(Waveform(np.zeros(10000), 2000))
    frames_ok = frame_count(10000) == 77 and X.shape == (129, 77)
    win = get_window("hann", 256, fftbins=True)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal(int(rng.integers(256, 4000)))
        P = power_spec(stft(Waveform(x, 2000))).values
        for m in range(P.shape[1]):
            frame = x[m * 128:m * 128 + 256] * win
            # the stored half-spectrum counts interior bins once; the full DFT has them twice
            lhs = P[0, m] + P[-1, m] + 2 * P[1:-1, m].sum()
            rhs = 256 * np.sum(frame ** 2)
            worst = max(worst, abs(lhs - rhs) / rhs)
    elapsed = time.perf_counter() - t0
    ok = mel_ok and frames_ok and worst <= 1e-9 and elapsed < 30
    acceptance(4, ok, f"Mel(0)={mel_scale(0.0)} Mel(700)={mel_scale(700.0):.6f} Mel(1000)={mel_scale(1000.0):.6f} "
                      f"frames={X.shape[1]} parseval_rel={worst:.1e} ({elapsed:.1f}s)")
    assert ok


# 5 -----------------------------------------------------------------------

def test_ac05_gradient_check(acceptance):
    t0 = time.perf_counter()
    errs = [fd_gradient_error(seed) for seed in range(5)]
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 1e-4 and elapsed < 120
    acceptance(5, ok, f"max relative FD error {max(errs):.1e} over 5 seeds on 12x12x1 input ({elapsed:.1f}s)")
    assert ok


# 6 -----------------------------------------------------------------------

def test_ac06_freeze_contract(acceptance):
    X, y = two_cluster_images(64, seed=6)
    pre = cnn_train(cnn_init((16, 16), seed=6), X, y, TrainConfig(epochs=2, batch_size=16, seed=1))
    before = {k: v.copy() for k, v in pre.params.items()}
    tuned = cnn_train(pre, X, y, TrainConfig(epochs=10, batch_size=16, seed=2, freeze="all_but_dense"))
    conv = [k for k in before if k.startswith("conv")]
    dense = [k for k in before if k.startswith("dense")]
    conv_same = all(np.array_equal(tuned.params[k], before[k]) for k in conv)
    dense_moved = all(not np.array_equal(tuned.params[k], before[k]) for k in dense)
    ok = conv_same and dense_moved
    acceptance(6, ok, f"conv params bit-identical after 10 fine-tune epochs: {conv_same}; dense updated: {dense_moved}")
    assert ok


# 7 -----------------------------------------------------------------------

def test_ac07_metric_exactness(built, acceptance):
    _, m, _ = built
    rng = np.random.default_rng(7)
    exact = True
    for _ in range(20):
        tp, fp, tn, fn = (int(v) for v in rng.integers(1, 500, size=4))
        cm = ConfusionMatrix(tp, fp, tn, fn)
        exact &= recall(cm, "abnormal") == float(Fraction(tp, tp + fn))
        exact &= recall(cm, "normal") == float(Fraction(tn, tn + fp))
        exact &= accuracy(cm) == float(Fraction(tp + tn, tp + fp + tn + fn))
    preds, _ = _svm_test_predictions(m, 0)
    cell = facet_breakdown(preds, m, "overall")["all"]
    labels = [r.class_label for r in m.rows if r.split == "test"]
    balanced = labels.count("normal") == labels.count("abnormal")
    gap = abs(cell.accuracy - (cell.recall_normal + cell.recall_abnormal) / 2)
    ok = bool(exact) and balanced and gap <= 1e-12
    acceptance(7, ok, f"20 random matrices exact={bool(exact)}; balanced test set accuracy - mean recall = {gap:.1e}")
    assert ok


# 8 -----------------------------------------------------------------------

def test_ac08_end_to_end_trend(tmp_path, acceptance):
    t0 = time.perf_counter()
    details = []
    ok = True
    for seed in (0, 1, 2):
        m = build_dataset(load_recipe("reference", master_seed=seed), tmp_path / f"s{seed}")
        preds, _ = _svm_test_predictions(m, seed)
        snr = facet_breakdown(preds, m, "snr_db")
        acc = {float(k): c.accuracy for k, c in snr.groups.items()}
        high = np.mean([acc[20.0], acc[30.0], acc[40.0]])
        low = np.mean([acc[-10.0], acc[-5.0], acc[0.0]])
        gap_pp = 100 * (high - low)
        ok &= gap_pp >= 10 and acc[40.0] >= acc[-10.0]
        details.append(f"seed{seed}: gap={gap_pp:.1f}pp acc40={acc[40.0]:.3f} acc-10={acc[-10.0]:.3f}")
    elapsed = time.perf_counter() - t0
    ok = bool(ok) and elapsed < 600
    acceptance(8, ok, "; ".join(details) + f" ({elapsed:.0f}s)")
    assert ok


# 9 -----------------------------------------------------------------------

def test_ac09_repeat_protocol(built, acceptance):
    _, m, _ = built
    test_rows = [r for r in m.rows if r.split == "test"]
    const = repeat_experiment(lambda seed: {r.recording_id: 1 for r in test_rows}, m, ALL_FACETS, n_repeats=10)
    const_std = [c.accuracy_std for rep in const.values() for c in rep.groups.values()]

    def noisy(seed):
        r = np.random.default_rng(seed)
        return {row.recording_id: int(r.choice([-1, 1])) for row in test_rows}

    agg = repeat_experiment(noisy, m, ("overall",), n_repeats=10, master_seed=5)["overall"]["all"]
    from heartnoise.evaluate import derive_repeat_seeds

    accs = [facet_breakdown(noisy(s), m, "overall")["all"].accuracy for s in derive_repeat_seeds(5, 10)]
    mean_ok = abs(agg.accuracy - statistics.fmean(accs)) <= 1e-12
    std_ok = abs(agg.accuracy_std - statistics.stdev(accs)) <= 1e-12
    ok = all(s == 0.0 for s in const_std) and mean_ok and std_ok and all(r.repeats == 10 for r in const.values())
    acceptance(9, ok, f"constant predictor std max={max(const_std)} over {len(const_std)} cells; "
                      f"random predictor mean/std match oracle: {mean_ok and std_ok}")
    assert ok


# 10 ----------------------------------------------------------------------

def test_ac10_determinism(built, tmp_path, acceptance, capsys):
    first, m, _ = built
    second = tmp_path / "again"
    assert main(["build-dataset", "reference", str(second)]) == 0
    files = ["manifest.csv", "manifest.json"] + [r.path for r in m.rows]
    diff = [f for f in files if (first / f).read_bytes() != (second / f).read_bytes()]

    models = []
    for run in ("a", "b"):
        cfg = tmp_path / f"svm_{run}.json"
        cfg.write_text(f'{{"manifest": "{second}/manifest.csv", "output_dir": "{tmp_path}/svm_{run}"}}')
        assert main(["train", str(cfg)]) == 0
        models.append((tmp_path / f"svm_{run}/model.hnm").read_bytes())
    svm_same = models[0] == models[1]

    X, y = two_cluster_images(48, seed=10)
    cfg = TrainConfig(epochs=2, batch_size=16, seed=3)
    cnn_same = model_to_bytes(cnn_train(cnn_init((16, 16), seed=3), X, y, cfg)) == model_to_bytes(
        cnn_train(cnn_init((16, 16), seed=3), X, y, cfg))
    capsys.readouterr()
    ok = not diff and svm_same and cnn_same
    acceptance(10, ok, f"{len(files) - len(diff)}/{len(files)} dataset files byte-identical; "
                       f"svm model identical: {svm_same}; cnn model identical: {cnn_same}")
    assert ok
