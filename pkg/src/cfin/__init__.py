"""Lightweight hybrid CNN/transformer super-resolution on a from-scratch numerics core."""

import os as _os

# Cap internal parallelism before numpy is pulled in anywhere below.
_t = _os.environ.get("CFIN_THREADS")
if _t:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _t)

from .tensor import (  # noqa: E402
    DisconnectedGraphError,
    NonFiniteError,
    ShapeError,
    Tensor,
    backward,
    no_grad,
    set_finite_checks,
)
from .conv import conv2d, deconv2d, pixel_shuffle, pixel_unshuffle  # noqa: E402
from .model import CFIN, ModelConfig, build_model, count_multi_adds  # noqa: E402
from .archive import (  # noqa: E402
    ArchiveError,
    BadMagicError,
    BadVersionError,
    TensorMismatchError,
    TruncatedArchiveError,
    load_model,
    save_model,
)
from .metrics import psnr, ssim  # noqa: E402
from .data import ImageBuf, bicubic_resize, rgb_to_y  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "DisconnectedGraphError",
    "backward",
    "no_grad",
    "set_finite_checks",
    "conv2d",
    "deconv2d",
    "pixel_shuffle",
    "pixel_unshuffle",
    "CFIN",
    "ModelConfig",
    "build_model",
    "count_multi_adds",
    "ArchiveError",
    "BadMagicError",
    "BadVersionError",
    "TruncatedArchiveError",
    "TensorMismatchError",
    "save_model",
    "load_model",
    "psnr",
    "ssim",
    "ImageBuf",
    "rgb_to_y",
    "bicubic_resize",
]
