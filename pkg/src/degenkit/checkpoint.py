"""Binary checkpoint format for network parameters.

Layout: magic ``RNND``, one version byte (0x01), a little-endian uint64
length prefix, a UTF-8 JSON manifest (tensor names/shapes/dtype, the
parameterization record, seed, config hash), then the raw float64
little-endian arrays in row-major order, in manifest order. Writes are
atomic (temp file + rename). Round trips are lossless at 64-bit precision.
"""

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import CorruptCheckpoint
from .rnn import Parameterization, RnnParams

MAGIC = b"RNND"
VERSION = 1

_TENSOR_ORDER = ("W_h", "W_x", "b", "W_out", "b_out")


def save_checkpoint(params, path, seed=None, config_hash=None):
    path = Path(path)
    arrays = params.as_dict()
    manifest = {
        "tensors": [
            {"name": name, "shape": list(arrays[name].shape), "dtype": "f64"}
            for name in _TENSOR_ORDER
        ],
        "parameterization": {
            "mode": params.param_mode.mode.value,
            "width": params.param_mode.width,
            "gamma": params.param_mode.gamma,
            "tau": params.param_mode.tau,
        },
        "seed": seed,
        "config_hash": config_hash,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(arrays[name], dtype="<f8").tobytes() for name in _TENSOR_ORDER
    )

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(bytes([VERSION]))
            f.write(struct.pack("<Q", len(blob)))
            f.write(blob)
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_manifest(path):
    with open(path, "rb") as f:
        head = f.read(len(MAGIC) + 1 + 8)
        if len(head) < len(MAGIC) + 1 + 8 or head[: len(MAGIC)] != MAGIC:
            raise CorruptCheckpoint(f"{path}: bad magic bytes")
        if head[len(MAGIC)] != VERSION:
            raise CorruptCheckpoint(f"{path}: unsupported version {head[len(MAGIC)]}")
        (blob_len,) = struct.unpack("<Q", head[len(MAGIC) + 1 :])
        blob = f.read(blob_len)
        if len(blob) < blob_len:
            raise CorruptCheckpoint(f"{path}: truncated manifest")
        try:
            manifest = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptCheckpoint(f"{path}: unreadable manifest: {exc}") from exc
        return manifest, f.read()


def load_checkpoint(path):
    manifest, payload = read_manifest(path)
    try:
        tensors = manifest["tensors"]
        pz = manifest["parameterization"]
        mode = Parameterization(
            width=int(pz["width"]),
            mode=pz["mode"],
            gamma=float(pz["gamma"]),
            tau=float(pz["tau"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: invalid manifest: {exc}") from exc

    expected = sum(int(np.prod(t["shape"])) for t in tensors) * 8
    if len(payload) != expected:
        raise CorruptCheckpoint(
            f"{path}: payload holds {len(payload)} bytes, manifest declares {expected}"
        )

    arrays = {}
    offset = 0
    for t in tensors:
        if t.get("dtype") != "f64":
            raise CorruptCheckpoint(f"{path}: unsupported dtype {t.get('dtype')}")
        count = int(np.prod(t["shape"]))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
        offset += count * 8

    missing = [name for name in _TENSOR_ORDER if name not in arrays]
    if missing:
        raise CorruptCheckpoint(f"{path}: manifest missing tensors {missing}")
    try:
        return RnnParams(
            W_h=arrays["W_h"],
            W_x=arrays["W_x"],
            b=arrays["b"],
            W_out=arrays["W_out"],
            b_out=arrays["b_out"],
            param_mode=mode,
        )
    except ValueError as exc:
        raise CorruptCheckpoint(f"{path}: inconsistent tensors: {exc}") from exc
