"""Self-describing binary container for trained models.

Layout (all integers little-endian)::

    b"HNMD" | u8 version | 3 zero bytes | u32 header_len | header (UTF-8 JSON)
    | arrays as f64 LE, in header order | u32 CRC-32 of all preceding bytes

The header carries the architecture descriptor, scalar metadata and the
name/shape of every array.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import ArchitectureError, ChecksumError, ModelFormatError, VersionMismatchError
from .cnn import CnnModel
from .svm import LinearModel

MAGIC = b"HNMD"
VERSION = 1
ARCH_SVM = "linear_svm"
ARCH_CNN = "cnn3"
_KIND_TO_ARCH = {"svm": ARCH_SVM, "cnn": ARCH_CNN}

Model = Union[LinearModel, CnnModel]


def _pack(arch: str, meta: dict, arrays) -> bytes:
    header = {
        "arch": arch,
        "meta": meta,
        "arrays": [[name, list(a.shape)] for name, a in arrays],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = bytearray(MAGIC + struct.pack("<B3xI", VERSION, len(hbytes)) + hbytes)
    for _, a in arrays:
        body += np.ascontiguousarray(a, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    return bytes(body)


def model_to_bytes(m: Model) -> bytes:
    if isinstance(m, LinearModel):
        arrays = [
            ("weights", m.weights),
            ("bias", np.asarray(m.bias)),
            ("mean", m.mean),
            ("scale", m.scale),
        ]
        return _pack(ARCH_SVM, {"feature_kind": m.feature_kind, "extra": m.meta}, arrays)
    if isinstance(m, CnnModel):
        meta = {
            "feature_kind": m.feature_kind,
            "input_shape": list(m.input_shape),
            "norm_mean": m.norm_mean,
            "norm_std": m.norm_std,
            "norm_fitted": m.norm_fitted,
            "adam_t": m.adam_t,
            "extra": m.meta,
        }
        arrays = [(k, v) for k, v in m.params.items()]
        arrays += [(f"adam_m/{k}", v) for k, v in m.adam_m.items()]
        arrays += [(f"adam_v/{k}", v) for k, v in m.adam_v.items()]
        return _pack(ARCH_CNN, meta, arrays)
    raise TypeError(f"cannot serialize {type(m).__name__}")


def model_save(m: Model, path) -> None:
    Path(path).write_bytes(model_to_bytes(m))


def model_from_bytes(raw: bytes, expect: Optional[str] = None) -> Model:
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise ModelFormatError("not a model container (bad magic)")
    version, hlen = struct.unpack("<B3xI", raw[4:12])
    if version != VERSION:
        raise VersionMismatchError(f"container version {version}, this reader supports {VERSION}")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc or 12 + hlen > len(raw) - 4:
        raise ChecksumError("model file is truncated or corrupt (checksum mismatch)")
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    arch = header.get("arch")
    if expect is not None and _KIND_TO_ARCH.get(expect, expect) != arch:
        raise ArchitectureError(f"expected a {expect} model, file holds {arch!r}")

    arrays = {}
    off = 12 + hlen
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        arrays[name] = a
        off += 8 * count
    if off != len(raw) - 4:
        raise ChecksumError("payload length does not match header")
    meta = header["meta"]

    if arch == ARCH_SVM:
        return LinearModel(
            arrays["weights"], float(arrays["bias"]), meta["feature_kind"], arrays["mean"], arrays["scale"],
            meta.get("extra", {}),
        )
    if arch == ARCH_CNN:
        params = {k: v for k, v in arrays.items() if "/" not in k}
        m = CnnModel(
            tuple(meta["input_shape"]), params, meta["feature_kind"],
            meta["norm_mean"], meta["norm_std"], meta["norm_fitted"],
        )
        m.adam_m = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("adam_m/")}
        m.adam_v = {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith("adam_v/")}
        m.adam_t = int(meta["adam_t"])
        m.meta = meta.get("extra", {})
        return m
    raise ArchitectureError(f"unknown architecture descriptor {arch!r}")


def model_load(path, expect: Optional[str] = None) -> Model:
    """Load a model; ``expect`` ("svm" or "cnn") enforces the architecture."""
    return model_from_bytes(Path(path).read_bytes(), expect)
