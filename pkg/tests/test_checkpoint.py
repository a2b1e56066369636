import json
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

import degenkit as dk
from degenkit.checkpoint import MAGIC, load_checkpoint, read_manifest, save_checkpoint
from degenkit.exceptions import CorruptCheckpoint
from degenkit.rnn import Parameterization


@given(st.sampled_from(["standard", "mup"]), st.integers(0, 10_000))
def test_roundtrip_bit_identical(tmp_path_factory, mode_name, seed):
    tmp = tmp_path_factory.mktemp("ckpt")
    mode = Parameterization(width=5, mode=mode_name, gamma=1.5, tau=0.5)
    params = dk.init_params(5, 3, 2, mode, seed)
    path = tmp / f"p{seed}.rnnd"
    save_checkpoint(params, path, seed=seed, config_hash="abc")
    loaded = load_checkpoint(path)
    for k, v in params.as_dict().items():
        assert np.array_equal(loaded.as_dict()[k], v)
    assert loaded.param_mode == params.param_mode


def test_manifest_contents(tmp_path):
    params = dk.init_params(3, 1, 1, Parameterization(width=3), 0)
    path = tmp_path / "net.rnnd"
    save_checkpoint(params, path, seed=7, config_hash="deadbeef")
    manifest, payload = read_manifest(path)
    assert manifest["seed"] == 7
    assert manifest["config_hash"] == "deadbeef"
    assert [t["name"] for t in manifest["tensors"]] == ["W_h", "W_x", "b", "W_out", "b_out"]
    assert all(t["dtype"] == "f64" for t in manifest["tensors"])
    assert len(payload) == (9 + 3 + 3 + 3 + 1) * 8


def test_truncated_payload_is_rejected(tmp_path):
    params = dk.init_params(3, 1, 1, Parameterization(width=3), 0)
    path = tmp_path / "net.rnnd"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_bad_magic_and_version(tmp_path):
    params = dk.init_params(3, 1, 1, Parameterization(width=3), 0)
    path = tmp_path / "net.rnnd"
    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"NOPE"
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)

    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_manifest_shape_mismatch_is_rejected(tmp_path):
    params = dk.init_params(3, 1, 1, Parameterization(width=3), 0)
    path = tmp_path / "net.rnnd"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    (mlen,) = struct.unpack("<Q", blob[5:13])
    manifest = json.loads(blob[13 : 13 + mlen].decode())
    manifest["tensors"][0]["shape"] = [4, 4]  # lies about W_h
    doctored = json.dumps(manifest, sort_keys=True).encode()
    path.write_bytes(blob[:5] + struct.pack("<Q", len(doctored)) + doctored + blob[13 + mlen :])
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(path)


def test_overwrite_is_atomic_and_clean(tmp_path):
    p1 = dk.init_params(3, 1, 1, Parameterization(width=3), 0)
    p2 = dk.init_params(3, 1, 1, Parameterization(width=3), 1)
    path = tmp_path / "net.rnnd"
    save_checkpoint(p1, path)
    save_checkpoint(p2, path)
    assert np.array_equal(load_checkpoint(path).W_h, p2.W_h)
    assert list(tmp_path.iterdir()) == [path]  # no temp litter


def test_magic_constant():
    assert MAGIC == b"RNND"
