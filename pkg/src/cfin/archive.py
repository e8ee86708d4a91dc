"""Binary weight archive: magic, version, canonical JSON config, tensor table.

Layout (all integers little-endian):

    magic    4 bytes  b"CFIN"
    version  u32      currently 1
    cfg_len  u32      length of the canonical JSON config
    cfg      utf-8 JSON (sorted keys, no whitespace)
    count    u32      number of tensors
    per tensor:
        name_len u16, name utf-8
        dtype    u8   (0 = float64, 1 = float32)
        ndim     u8
        dims     u32 * ndim
        data     raw little-endian values

Tensors are written in the model's deterministic parameter order, so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from .model import CFIN, ModelConfig, build_model

__all__ = [
    "ArchiveError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedArchiveError",
    "TensorMismatchError",
    "save_model",
    "load_model",
    "MAGIC",
    "VERSION",
]

MAGIC = b"CFIN"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_DTYPE_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}


class ArchiveError(Exception):
    """Base class for weight-archive failures."""


class BadMagicError(ArchiveError):
    pass


class BadVersionError(ArchiveError):
    pass


class TruncatedArchiveError(ArchiveError):
    pass


class TensorMismatchError(ArchiveError):
    """A stored tensor does not line up with the model the config builds."""


def save_model(model: CFIN, path: str) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    cfg = model.config.to_json().encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    named = list(model.named_params())
    buf.write(struct.pack("<I", len(named)))
    for name, p in named:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        tag = _DTYPE_TAGS[np.dtype(p.dtype)]
        buf.write(struct.pack("<BB", tag, p.ndim))
        for d in p.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(p.data, dtype=_DTYPES[tag]).tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def _read(f, n: int, what: str) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise TruncatedArchiveError(f"archive truncated while reading {what}")
    return b


def load_model(path: str) -> CFIN:
    with open(path, "rb") as f:
        if _read(f, 4, "magic") != MAGIC:
            raise BadMagicError(f"{path} is not a weight archive (bad magic)")
        (version,) = struct.unpack("<I", _read(f, 4, "version"))
        if version != VERSION:
            raise BadVersionError(f"unsupported archive version {version} (expected {VERSION})")
        (cfg_len,) = struct.unpack("<I", _read(f, 4, "config length"))
        try:
            config = ModelConfig.from_json(_read(f, cfg_len, "config").decode("utf-8"))
        except (ValueError, TypeError) as e:
            raise TensorMismatchError(f"archive config is invalid: {e}") from e
        model = build_model(config, seed=0)
        expected = dict(model.named_params())
        (count,) = struct.unpack("<I", _read(f, 4, "tensor count"))
        if count != len(expected):
            raise TensorMismatchError(
                f"archive holds {count} tensors, model needs {len(expected)}")
        seen = set()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(f, 2, "tensor name length"))
            name = _read(f, name_len, "tensor name").decode("utf-8")
            tag, ndim = struct.unpack("<BB", _read(f, 2, f"{name} header"))
            if tag not in _DTYPES:
                raise TensorMismatchError(f"tensor {name} has unknown dtype tag {tag}")
            shape = tuple(
                struct.unpack("<I", _read(f, 4, f"{name} dims"))[0] for _ in range(ndim))
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = _read(f, n_items * _DTYPES[tag].itemsize, f"{name} data")
            if name in seen:
                raise TensorMismatchError(f"duplicate tensor {name}")
            seen.add(name)
            if name not in expected:
                raise TensorMismatchError(f"unexpected tensor {name}")
            target = expected[name]
            if shape != target.shape:
                raise TensorMismatchError(
                    f"tensor {name} has shape {shape}, model expects {target.shape}")
            if _DTYPES[tag] != np.dtype(config.dtype):
                raise TensorMismatchError(
                    f"tensor {name} dtype does not match config precision {config.precision}")
            target.data = np.frombuffer(raw, dtype=_DTYPES[tag]).reshape(shape).astype(
                config.dtype, copy=True)
        if f.read(1):
            raise TensorMismatchError("trailing bytes after the last tensor")
    return model
