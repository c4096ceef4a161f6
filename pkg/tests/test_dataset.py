import csv
import json
import logging

import numpy as np
import pytest
from scipy.signal import welch

from heartnoise.dataset import (
    MANIFEST_HEADER,
    REFERENCE_TEST_IDS,
    REFERENCE_TRAIN_IDS,
    BaseRecording,
    DatasetRecipe,
    build_dataset,
    check_no_leakage,
    gen_surrogate_heart_sound,
    load_physionet,
    read_manifest,
    recording_id,
    row_seed,
    split_train_test,
)
from heartnoise.errors import LeakageError, RecipeError, SchemaError
from heartnoise.noise import NoiseCatalog, default_catalog
from heartnoise.signal import Waveform, write_wav


def test_surrogate_cycle_count():
    x = gen_surrogate_heart_sound("normal", 10, 75, 0).samples
    assert len(x) == 20000 and np.max(np.abs(x)) == 1.0
    idx = np.flatnonzero(np.abs(x) > 0.2)
    events = 1 + np.sum(np.diff(idx) > 200)
    assert events == 2 * 12


def test_surrogate_murmur_band_energy():
    for seed in range(5):
        energies = []
        for label in ("normal", "abnormal"):
            f, p = welch(gen_surrogate_heart_sound(label, 10, 75, seed).samples, 2000, nperseg=1024)
            energies.append(p[(f >= 120) & (f <= 400)].sum())
        assert energies[1] > energies[0]


def test_surrogate_determinism_and_validation():
    a = gen_surrogate_heart_sound("abnormal", 3, 80, 5)
    assert a == gen_surrogate_heart_sound("abnormal", 3, 80, 5)
    with pytest.raises(ValueError):
        gen_surrogate_heart_sound("normal", 3, 20, 5)
    with pytest.raises(ValueError):
        gen_surrogate_heart_sound("murmur", 3, 80, 5)


def test_base_duration_class():
    assert BaseRecording(1, "normal", Waveform(np.ones(9998), 2000)).duration_class == "short"
    assert BaseRecording(1, "normal", Waveform(np.ones(10000), 2000)).duration_class == "long"


def test_row_seed_is_documented_hash():
    import hashlib

    digest = hashlib.sha256(b"7|3|pink|-5").digest()
    assert row_seed(7, 3, "pink", -5.0) == int.from_bytes(digest[:8], "little") & (2**63 - 1)
    assert row_seed(7, 3, "pink", -5) != row_seed(8, 3, "pink", -5)
    assert recording_id(3, "pink", -5.0) == "b003_pink_snr-5"


def test_reference_manifest_counts(reference_dataset):
    out, m = reference_dataset
    assert len(m) == 3360
    per_base = {}
    for r in m.rows:
        per_base[r.base_id] = per_base.get(r.base_id, 0) + 1
    assert set(per_base.values()) == {210} and len(per_base) == 16
    train, test = split_train_test(m, REFERENCE_TRAIN_IDS, REFERENCE_TEST_IDS)
    assert len(train) == len(test) == 1680
    for part in (train, test):
        labels = [r.class_label for r in part.rows]
        assert labels.count("normal") == labels.count("abnormal")
    assert [r.split for r in train.rows] == ["train"] * 1680
    check_no_leakage(m)


def test_manifest_file_format(reference_dataset):
    out, m = reference_dataset
    with open(out / "manifest.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == MANIFEST_HEADER
    assert len(rows) == 3361
    # rows follow (base id, catalog order, SNR ladder) regardless of --jobs
    names = default_catalog().names()
    keys = [(int(r[1]), names.index(r[3]), float(r[6])) for r in rows[1:]]
    assert keys == sorted(keys)
    side = json.loads((out / "manifest.json").read_text())
    assert len(side["bases"]) == 16
    again = read_manifest(out / "manifest.csv")
    assert again.rows == m.rows
    assert all((out / r.path).is_file() for r in m.rows[:20])


def test_manifest_measured_snr_and_placement(reference_dataset):
    out, m = reference_dataset
    short = [r for r in m.rows if r.noise_duration_class == "short"]
    long_ = [r for r in m.rows if r.noise_duration_class == "long"]
    assert all(r.offset_samples == 0 for r in long_)
    assert any(r.offset_samples > 0 for r in short)


def _tiny_recipe(seed=0, train=(1,), test=(2,)):
    bases = [
        BaseRecording(1, "normal", gen_surrogate_heart_sound("normal", 3, 70, 1)),
        BaseRecording(2, "abnormal", gen_surrogate_heart_sound("abnormal", 3, 70, 2)),
    ]
    cat = NoiseCatalog([default_catalog()["pink"], default_catalog()["coughing"]])
    return DatasetRecipe(bases, cat, train, test, [0.0, 10.0], seed)


def test_build_is_byte_identical(tmp_path):
    a = build_dataset(_tiny_recipe(), tmp_path / "a")
    b = build_dataset(_tiny_recipe(), tmp_path / "b", jobs=3)
    assert len(a) == 8
    assert (tmp_path / "a/manifest.csv").read_bytes() == (tmp_path / "b/manifest.csv").read_bytes()
    for r in a.rows:
        assert (tmp_path / "a" / r.path).read_bytes() == (tmp_path / "b" / r.path).read_bytes()
    c = build_dataset(_tiny_recipe(seed=1), tmp_path / "c")
    assert any((tmp_path / "a" / r.path).read_bytes() != (tmp_path / "c" / r.path).read_bytes() for r in c.rows)


def test_recipe_errors(tmp_path):
    with pytest.raises(LeakageError):
        _tiny_recipe(train=(1, 2), test=(2,))
    with pytest.raises(RecipeError):
        build_dataset(_tiny_recipe(train=(1,), test=(3,)), tmp_path / "x")
    r = _tiny_recipe()
    r.catalog = NoiseCatalog([])
    with pytest.raises(RecipeError):
        build_dataset(r, tmp_path / "y")


def test_split_edge_cases(reference_dataset):
    _, m = reference_dataset
    full, empty = split_train_test(m, range(1, 17), [])
    assert len(full) == 3360 and len(empty) == 0
    with pytest.raises(LeakageError):
        split_train_test(m, {1, 2}, {2, 3})


def _physionet_dir(tmp_path, rows, wavs):
    for stem in wavs:
        write_wav(gen_surrogate_heart_sound("normal", 2, 70, 0), tmp_path / f"{stem}.wav")
    (tmp_path / "REFERENCE.csv").write_text("".join(",".join(r) + "\n" for r in rows))
    return tmp_path


def test_load_physionet(tmp_path, caplog):
    d = _physionet_dir(
        tmp_path,
        [("a0001", "-1"), ("a0002", "-1"), ("a0003", "1"), ("a0004", "1", "unsure")],
        ["a0001", "a0002", "a0003", "a0004", "a0005"],
    )
    with caplog.at_level(logging.WARNING):
        bases = load_physionet(d)
    assert [b.class_label for b in bases] == ["normal", "normal", "abnormal"]
    assert [b.source for b in bases] == ["a0001", "a0002", "a0003"]
    assert "a0005" in caplog.text


def test_load_physionet_errors(tmp_path):
    with pytest.raises(SchemaError):
        load_physionet(tmp_path)
    _physionet_dir(tmp_path, [("a0001", "2")], ["a0001"])
    with pytest.raises(SchemaError):
        load_physionet(tmp_path)
