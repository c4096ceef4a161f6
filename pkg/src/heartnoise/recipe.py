"""JSON recipe files for ``build-dataset``.

Schema (all keys optional except ``bases``)::

    {
      "bases": {"surrogate": "reference", "seed": 0}
             | {"physionet": "<dir>"}
             | [{"id": 1, "class_label": "normal", "path": "<wav>", "subtype": ""}, ...],
      "catalog": "default" | {"manifest": "<csv>", "dir": "<dir>"},
      "snr_levels_db": [-10, -5, 0, 5, 10, 15, 20, 25, 30, 40],
      "train_base_ids": [...], "test_base_ids": [...],
      "master_seed": 0,
      "sample_rate": 2000
    }

Relative paths resolve against the recipe file's directory.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from .dataset import (
    DEFAULT_SNR_LADDER,
    REFERENCE_TEST_IDS,
    REFERENCE_TRAIN_IDS,
    BaseRecording,
    DatasetRecipe,
    load_physionet,
    reference_surrogate_bases,
)
from .errors import SchemaError
from .noise import catalog_load, default_catalog
from .signal import CANONICAL_RATE, read_wav

RECIPE_SCHEMA = {
    "type": "object",
    "required": ["bases"],
    "additionalProperties": False,
    "properties": {
        "bases": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["surrogate"],
                    "properties": {"surrogate": {"const": "reference"}, "seed": {"type": "integer", "minimum": 0}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["physionet"],
                    "properties": {"physionet": {"type": "string"}},
                },
                {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["id", "class_label", "path"],
                        "properties": {
                            "id": {"type": "integer"},
                            "class_label": {"enum": ["normal", "abnormal"]},
                            "path": {"type": "string"},
                            "subtype": {"type": "string"},
                        },
                    },
                },
            ]
        },
        "catalog": {
            "oneOf": [
                {"const": "default"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["manifest"],
                    "properties": {"manifest": {"type": "string"}, "dir": {"type": "string"}},
                },
            ]
        },
        "snr_levels_db": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "train_base_ids": {"type": "array", "items": {"type": "integer"}},
        "test_base_ids": {"type": "array", "items": {"type": "integer"}},
        "master_seed": {"type": "integer", "minimum": 0},
        "sample_rate": {"type": "integer", "minimum": 1},
    },
}


def bundled_recipe_text() -> str:
    return resources.files("heartnoise.data").joinpath("reference_recipe.json").read_text(encoding="utf-8")


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def recipe_from_dict(doc: dict, base_dir: Path = Path("."), master_seed: Optional[int] = None) -> DatasetRecipe:
    try:
        jsonschema.validate(doc, RECIPE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"invalid recipe: {exc.message}") from None
    rate = doc.get("sample_rate", CANONICAL_RATE)

    spec = doc["bases"]
    if isinstance(spec, dict) and "surrogate" in spec:
        bases = reference_surrogate_bases(spec.get("seed", 0), rate)
    elif isinstance(spec, dict):
        bases = load_physionet(_resolve(base_dir, spec["physionet"]))
    else:
        bases = [
            BaseRecording(b["id"], b["class_label"], read_wav(_resolve(base_dir, b["path"])), b.get("subtype", ""),
                          source=b["path"])
            for b in spec
        ]

    cat = doc.get("catalog", "default")
    if cat == "default":
        catalog = default_catalog()
    else:
        mdir = _resolve(base_dir, cat.get("dir", ".")) if "dir" in cat else None
        catalog = catalog_load(mdir, _resolve(base_dir, cat["manifest"]))

    ids = sorted(b.id for b in bases)
    if "train_base_ids" in doc or "test_base_ids" in doc:
        train = doc.get("train_base_ids", [])
        test = doc.get("test_base_ids", [i for i in ids if i not in set(train)])
    elif isinstance(spec, dict) and "surrogate" in spec:
        train, test = sorted(REFERENCE_TRAIN_IDS), sorted(REFERENCE_TEST_IDS)
    else:
        train, test = ids, []

    seed = doc.get("master_seed", 0) if master_seed is None else master_seed
    return DatasetRecipe(
        bases, catalog, frozenset(train), frozenset(test),
        tuple(float(s) for s in doc.get("snr_levels_db", DEFAULT_SNR_LADDER)), seed, rate,
    )


def load_recipe(path, master_seed: Optional[int] = None) -> DatasetRecipe:
    """Load a recipe JSON file; ``"reference"`` selects the bundled recipe."""
    if str(path) == "reference":
        return recipe_from_dict(json.loads(bundled_recipe_text()), Path("."), master_seed)
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return recipe_from_dict(doc, path.parent, master_seed)
