"""Weight archive: byte-stable round trips and corruption diagnostics."""

import struct

import numpy as np
import pytest

from cfin.archive import (
    MAGIC,
    VERSION,
    BadMagicError,
    BadVersionError,
    TensorMismatchError,
    TruncatedArchiveError,
    load_model,
    save_model,
)
from cfin.model import ModelConfig, build_model
from cfin.tensor import Tensor

RNG = np.random.default_rng


def _fresh(tmp_path, seed=0, **overrides):
    cfg = ModelConfig.toy(**overrides)
    model = build_model(cfg, seed=seed)
    path = tmp_path / "weights.bin"
    save_model(model, str(path))
    return model, path


def test_round_trip_restores_every_tensor(tmp_path):
    model, path = _fresh(tmp_path, seed=3)
    loaded = load_model(str(path))
    assert loaded.config == model.config
    a, b = dict(model.named_params()), dict(loaded.named_params())
    assert a.keys() == b.keys()
    for name in a:
        assert np.array_equal(a[name].data, b[name].data), name


def test_save_load_save_is_byte_identical(tmp_path):
    model, path = _fresh(tmp_path, seed=5)
    loaded = load_model(str(path))
    path2 = tmp_path / "again.bin"
    save_model(loaded, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_round_trip_preserves_behaviour(tmp_path):
    model, path = _fresh(tmp_path, seed=7)
    # perturb weights away from the seed-0 skeleton the loader builds
    for _, p in model.named_params():
        p.data += 0.01
    save_model(model, str(path))
    loaded = load_model(str(path))
    x = Tensor(RNG(1).uniform(size=(1, 3, 8, 8)))
    assert np.array_equal(model(x).data, loaded(x).data)


def test_float32_round_trip(tmp_path):
    model, path = _fresh(tmp_path, precision="float32")
    loaded = load_model(str(path))
    for (_, a), (_, b) in zip(model.named_params(), loaded.named_params()):
        assert a.dtype == b.dtype == np.float32
        assert np.array_equal(a.data, b.data)


def test_header_layout(tmp_path):
    _, path = _fresh(tmp_path)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert struct.unpack("<I", raw[4:8])[0] == VERSION
    cfg_len = struct.unpack("<I", raw[8:12])[0]
    cfg = raw[12 : 12 + cfg_len]
    assert cfg == ModelConfig.toy().to_json().encode()


def test_bad_magic_detected(tmp_path):
    _, path = _fresh(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"PNG\x00"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        load_model(str(path))


def test_bad_version_detected(tmp_path):
    _, path = _fresh(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(BadVersionError):
        load_model(str(path))


def test_truncation_detected_everywhere(tmp_path):
    # chopping the file at any of a spread of offsets must raise the
    # truncation error, never return a model or crash differently
    _, path = _fresh(tmp_path)
    raw = path.read_bytes()
    for cut in [0, 2, 4, 6, 10, 11, 40, 100, len(raw) // 2, len(raw) - 1]:
        path.write_bytes(raw[:cut])
        with pytest.raises(TruncatedArchiveError):
            load_model(str(path))


def test_trailing_garbage_detected(tmp_path):
    _, path = _fresh(tmp_path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(TensorMismatchError):
        load_model(str(path))


def test_corrupt_config_detected(tmp_path):
    _, path = _fresh(tmp_path)
    raw = bytearray(path.read_bytes())
    raw[12] = ord("?")  # break the JSON
    path.write_bytes(bytes(raw))
    with pytest.raises(TensorMismatchError):
        load_model(str(path))


def test_tensor_count_mismatch_detected(tmp_path):
    _, path = _fresh(tmp_path)
    raw = bytearray(path.read_bytes())
    cfg_len = struct.unpack("<I", raw[8:12])[0]
    off = 12 + cfg_len
    count = struct.unpack("<I", raw[off : off + 4])[0]
    raw[off : off + 4] = struct.pack("<I", count + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises(TensorMismatchError):
        load_model(str(path))


def test_renamed_tensor_detected(tmp_path):
    _, path = _fresh(tmp_path)
    raw = bytearray(path.read_bytes())
    cfg_len = struct.unpack("<I", raw[8:12])[0]
    off = 12 + cfg_len + 4
    name_len = struct.unpack("<H", raw[off : off + 2])[0]
    raw[off + 2 : off + 2 + name_len] = b"z" * name_len
    path.write_bytes(bytes(raw))
    with pytest.raises(TensorMismatchError):
        load_model(str(path))


def test_reshaped_tensor_detected(tmp_path):
    _, path = _fresh(tmp_path)
    raw = bytearray(path.read_bytes())
    cfg_len = struct.unpack("<I", raw[8:12])[0]
    off = 12 + cfg_len + 4
    name_len = struct.unpack("<H", raw[off : off + 2])[0]
    dims_off = off + 2 + name_len + 2  # skip name, dtype tag, ndim
    d0 = struct.unpack("<I", raw[dims_off : dims_off + 4])[0]
    raw[dims_off : dims_off + 4] = struct.pack("<I", d0 + 1)
    path.write_bytes(bytes(raw))
    with pytest.raises((TensorMismatchError, TruncatedArchiveError)):
        load_model(str(path))


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_model(str(tmp_path / "nope.bin"))
