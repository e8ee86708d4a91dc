"""Fidelity metrics on [0, 1] images.

Both metrics have naive per-pixel reference implementations in the test
suite; these vectorized versions must agree with them to tight tolerance.
"""

from __future__ import annotations

import numpy as np

__all__ = ["psnr", "ssim", "gaussian_window"]


def _shaved(a: np.ndarray, b: np.ndarray, shave: int):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if shave < 0 or 2 * shave >= min(a.shape[-2], a.shape[-1]):
        raise ValueError(f"shave={shave} leaves no pixels")
    if shave:
        a = a[..., shave:-shave, shave:-shave]
        b = b[..., shave:-shave, shave:-shave]
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, shave: int = 0) -> float:
    """Peak signal-to-noise ratio in dB on [0, 1] data; +inf for identical inputs."""
    a, b = _shaved(a, b, shave)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * float(np.log10(1.0 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over all fully valid 11x11 windows.

    Single-channel 2-D inputs in [0, 1]; Gaussian window (sigma 1.5),
    weighted moments, stability constants (k1*L)^2 and (k2*L)^2 with L=1.
    """
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"ssim expects matching 2-D inputs, got {a.shape} vs {b.shape}")
    win = gaussian_window()
    n = win.shape[0]
    if a.shape[0] < n or a.shape[1] < n:
        raise ValueError(f"image smaller than the {n}x{n} ssim window")
    a = a.astype(np.float64)
    b = b.astype(np.float64)

    def filt(img):
        v = np.lib.stride_tricks.sliding_window_view(img, (n, n))
        return np.tensordot(v, win, axes=([2, 3], [0, 1]))

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a * mu_a
    sbb = filt(b * b) - mu_b * mu_b
    sab = filt(a * b) - mu_a * mu_b
    c1, c2 = k1 * k1, k2 * k2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))
