"""Structured spatial ops: convolution, transposed convolution, pixel shuffle.

Convolution is computed as im2col followed by a batched matrix multiply.
A naive direct-loop reference lives in the test suite and pins these
implementations down independently.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, _acc, _make

__all__ = ["conv2d", "deconv2d", "pixel_shuffle", "pixel_unshuffle"]


def _im2col(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Padded (B, C, Hp, Wp) -> windows (B, C, k, k, Ho, Wo)."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3))


def _col2im(cols: np.ndarray, shape: tuple, k: int, stride: int) -> np.ndarray:
    """Scatter-add windows (B, C, k, k, Ho, Wo) back onto a (B, C, Hp, Wp) canvas."""
    out = np.zeros(shape, dtype=cols.dtype)
    Ho, Wo = cols.shape[-2:]
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * Ho : stride, j : j + stride * Wo : stride] += cols[:, :, i, j]
    return out


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D cross-correlation.

    ``x`` is (B, C_in, H, W), ``weight`` is (C_out, C_in/groups, k, k);
    output is (B, C_out, (H + 2p - k)//s + 1, (W + 2p - k)//s + 1).
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects rank-4 input and weight")
    B, Ci, H, W = x.shape
    Co, Cig, kh, kw = weight.shape
    if kh != kw:
        raise ShapeError("conv2d kernels must be square")
    k = kh
    if Ci % groups or Co % groups:
        raise ShapeError(f"channels ({Ci} -> {Co}) not divisible by groups={groups}")
    if Cig != Ci // groups:
        raise ShapeError(f"weight expects {Cig * groups} input channels, got {Ci}")
    if H + 2 * padding < k or W + 2 * padding < k:
        raise ShapeError(f"spatial dims {H}x{W} (pad {padding}) smaller than kernel {k}")
    if bias is not None and bias.shape != (Co,):
        raise ShapeError("bias must be (C_out,)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    cols = _im2col(xp, k, stride).reshape(B, groups, Cig * k * k, Ho * Wo)
    wr = weight.data.reshape(groups, Co // groups, Cig * k * k)
    out = np.matmul(wr, cols).reshape(B, Co, Ho, Wo)
    if bias is not None:
        out = out + bias.data.reshape(1, Co, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gr = g.reshape(B, groups, Co // groups, Ho * Wo)
        if weight.requires_grad:
            dw = np.matmul(gr, cols.transpose(0, 1, 3, 2)).sum(axis=0)
            _acc(weight, dw.reshape(weight.shape))
        if x.requires_grad:
            dcols = np.matmul(wr.transpose(0, 2, 1), gr)
            dxp = _col2im(dcols.reshape(B, Ci, k, k, Ho, Wo), xp.shape, k, stride)
            _acc(x, dxp[:, :, padding : padding + H, padding : padding + W])
        if bias is not None:
            _acc(bias, g.sum(axis=(0, 2, 3)))

    return _make(out, parents, bwd, "conv2d")


def deconv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 2,
    padding: int = 0,
) -> Tensor:
    """Transposed 2-D convolution, the adjoint of ``conv2d``.

    ``weight`` is (C_in, C_out, k, k); output spatial dims are
    ``(H - 1) * stride + k - 2 * padding``.
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("deconv2d expects rank-4 input and weight")
    B, Ci, H, W = x.shape
    Cw, Co, kh, kw = weight.shape
    if kh != kw:
        raise ShapeError("deconv2d kernels must be square")
    k = kh
    if Cw != Ci:
        raise ShapeError(f"weight expects {Cw} input channels, got {Ci}")
    Ho = (H - 1) * stride + k - 2 * padding
    Wo = (W - 1) * stride + k - 2 * padding
    if Ho < 1 or Wo < 1:
        raise ShapeError("deconv2d output would be empty")
    if bias is not None and bias.shape != (Co,):
        raise ShapeError("bias must be (C_out,)")

    cols = np.einsum("bchw,cokl->boklhw", x.data, weight.data, optimize=True)
    canvas = _col2im(cols, (B, Co, Ho + 2 * padding, Wo + 2 * padding), k, stride)
    out = canvas[:, :, padding : padding + Ho, padding : padding + Wo]
    if bias is not None:
        out = out + bias.data.reshape(1, Co, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def bwd(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        gcols = _im2col(gp, k, stride)  # (B, Co, k, k, H, W)
        if x.requires_grad:
            _acc(x, np.einsum("boklhw,cokl->bchw", gcols, weight.data, optimize=True))
        if weight.requires_grad:
            _acc(weight, np.einsum("bchw,boklhw->cokl", x.data, gcols, optimize=True))
        if bias is not None:
            _acc(bias, g.sum(axis=(0, 2, 3)))

    return _make(np.ascontiguousarray(out), parents, bwd, "deconv2d")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (B, C*r^2, H, W) -> (B, C, r*H, r*W).

    ``out[b, c, r*h + i, r*w + j] == x[b, c*r^2 + i*r + j, h, w]``.
    """
    if x.ndim != 4:
        raise ShapeError("pixel_shuffle expects (B, C, H, W)")
    B, C2, H, W = x.shape
    if r < 1 or C2 % (r * r):
        raise ShapeError(f"channels {C2} not divisible by r^2={r * r}")
    C = C2 // (r * r)
    y = x.reshape((B, C, r, r, H, W))
    y = y.transpose((0, 1, 4, 2, 5, 3))
    return y.reshape((B, C, H * r, W * r))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of ``pixel_shuffle``: (B, C, r*H, r*W) -> (B, C*r^2, H, W)."""
    if x.ndim != 4:
        raise ShapeError("pixel_unshuffle expects (B, C, H, W)")
    B, C, Hr, Wr = x.shape
    if r < 1 or Hr % r or Wr % r:
        raise ShapeError(f"spatial dims {Hr}x{Wr} not divisible by r={r}")
    H, W = Hr // r, Wr // r
    y = x.reshape((B, C, H, r, W, r))
    y = y.transpose((0, 1, 3, 5, 2, 4))
    return y.reshape((B, C * r * r, H, W))
