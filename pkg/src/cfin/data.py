"""Image I/O, color conversion, bicubic resampling and patch sampling.

Images live on disk as 8-bit sRGB PNGs and in memory as float arrays in
[0, 1], channel-first (3, H, W). Datasets are directories with an ``HR/``
subfolder of PNGs; low-resolution counterparts are synthesized on the fly
by bicubic downscaling.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

__all__ = [
    "ImageBuf",
    "read_png",
    "write_png",
    "rgb_to_y",
    "bicubic_resize",
    "resize_to",
    "PatchSampler",
    "list_dataset",
    "synth_textures",
]


@dataclass
class ImageBuf:
    """8-bit sRGB pixels, shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError(f"ImageBuf wants uint8 (H, W, 3), got {self.pixels.shape} {self.pixels.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_array(self, dtype=np.float64) -> np.ndarray:
        """(3, H, W) float in [0, 1]."""
        return (self.pixels.astype(dtype) / dtype(255.0)).transpose(2, 0, 1)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuf":
        """Clamp a (3, H, W) float array to [0, 1] and quantize to 8 bits."""
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValueError(f"expected (3, H, W), got {arr.shape}")
        q = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
        return cls(q.transpose(1, 2, 0))


def read_png(path: str) -> ImageBuf:
    with Image.open(path) as im:
        if im.format != "PNG":
            raise ValueError(f"{path}: only PNG images are supported, got {im.format}")
        return ImageBuf(np.asarray(im.convert("RGB"), dtype=np.uint8))


def write_png(buf: ImageBuf, path: str) -> None:
    Image.fromarray(buf.pixels, mode="RGB").save(path, format="PNG")


def rgb_to_y(rgb: np.ndarray) -> np.ndarray:
    """Studio-swing luma of (3, H, W) RGB in [0, 1]; result in [16/255, 235/255]."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected (3, H, W), got {rgb.shape}")
    r, g, b = rgb[0], rgb[1], rgb[2]
    return (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0


# ---- bicubic resampling -------------------------------------------------


def _cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    far = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _resample_weights(n_in: int, n_out: int):
    """Per-output-index source indices and normalized cubic weights.

    On downscale the kernel is stretched by the inverse scale factor
    (anti-alias prefiltering). Border samples clamp to the edge.
    """
    scale = n_out / n_in
    stretch = max(1.0, 1.0 / scale)
    support = 2.0 * stretch
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(int) + 1
    taps = int(np.ceil(2.0 * support)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    w = _cubic((centers[:, None] - idx) / stretch)
    w /= w.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), w


def resize_to(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize of (..., H, W) to (..., out_h, out_w)."""
    h, w = arr.shape[-2], arr.shape[-1]
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be positive")
    out = arr
    if out_h != h:
        idx, wt = _resample_weights(h, out_h)
        out = (out[..., idx, :] * wt[..., None]).sum(axis=-2)
    if out_w != w:
        idx, wt = _resample_weights(w, out_w)
        out = (out[..., idx] * wt).sum(axis=-1)
    return out


def bicubic_resize(arr: np.ndarray, scale: float) -> np.ndarray:
    """Resize (..., H, W) by ``scale``; output dims are round(scale * dims)."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    h, w = arr.shape[-2], arr.shape[-1]
    return resize_to(arr, int(round(scale * h)), int(round(scale * w)))


# ---- datasets and patches ------------------------------------------------


def list_dataset(root: str) -> list[str]:
    hr_dir = os.path.join(root, "HR")
    if not os.path.isdir(hr_dir):
        raise FileNotFoundError(f"dataset root {root} has no HR/ directory")
    names = sorted(n for n in os.listdir(hr_dir) if n.lower().endswith(".png"))
    if not names:
        raise FileNotFoundError(f"no PNG files under {hr_dir}")
    return [os.path.join(hr_dir, n) for n in names]


class PatchSampler:
    """Aligned LR/HR patch pairs with flip and quarter-turn augmentation.

    ``hr_images`` are (3, H, W) floats in [0, 1] with dims divisible by
    ``scale``; the LR side of each pair is the bicubic downscale, cached
    per image. A patch is ``patch`` LR pixels square and ``patch * scale``
    HR pixels square, cut at offsets that keep the two grids aligned.
    """

    def __init__(self, hr_images: list[np.ndarray], patch: int, scale: int,
                 rng: np.random.Generator, augment: bool = True):
        if not hr_images:
            raise ValueError("need at least one image")
        self.patch, self.scale, self.rng, self.augment = patch, scale, rng, augment
        self.hr = []
        self.lr = []
        for im in hr_images:
            h, w = im.shape[-2:]
            if h % scale or w % scale:
                raise ValueError(f"image dims {h}x{w} not divisible by scale {scale}")
            if h // scale < patch or w // scale < patch:
                raise ValueError(f"image too small for {patch}-pixel LR patches")
            self.hr.append(im)
            self.lr.append(bicubic_resize(im, 1.0 / scale))

    def _one(self):
        i = int(self.rng.integers(len(self.hr)))
        lr, hr = self.lr[i], self.hr[i]
        p, s = self.patch, self.scale
        y = int(self.rng.integers(lr.shape[-2] - p + 1))
        x = int(self.rng.integers(lr.shape[-1] - p + 1))
        lp = lr[:, y : y + p, x : x + p]
        hp = hr[:, s * y : s * (y + p), s * x : s * (x + p)]
        if self.augment:
            if self.rng.random() < 0.5:
                lp, hp = lp[..., ::-1], hp[..., ::-1]
            k = int(self.rng.integers(4))
            lp = np.rot90(lp, k, axes=(-2, -1))
            hp = np.rot90(hp, k, axes=(-2, -1))
        return np.ascontiguousarray(lp), np.ascontiguousarray(hp)

    def sample(self, batch: int):
        pairs = [self._one() for _ in range(batch)]
        return (np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs]))


def synth_textures(count: int, size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Deterministic family of oriented-grating textures, (3, size, size) in [0, 1].

    Frequencies sit below the Nyquist rate of the half-resolution grid, so
    a downscaled copy still determines the pattern while naive upscaling
    blurs it; that gap is what a small model can learn to close.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images = []
    for _ in range(count):
        img = np.full((size, size), 0.5)
        for amp in (0.28, 0.14):
            f = rng.uniform(3.0, 7.0)
            theta = rng.uniform(0.0, np.pi)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            fx, fy = f * np.cos(theta), f * np.sin(theta)
            img = img + amp * np.sin(2.0 * np.pi * (fx * xx + fy * yy) / size + phase)
        img = np.clip(img, 0.02, 0.98)
        tint = rng.uniform(0.9, 1.0, size=3)
        images.append(np.clip(img[None, :, :] * tint[:, None, None], 0.0, 1.0))
    return images
