"""Naive reference implementations used as independent oracles.

Everything here is direct-loop and obviously-correct-by-inspection; the
library's vectorized code is pinned against these.
"""

import math

import numpy as np


def naive_conv2d(x, w, bias=None, stride=1, padding=1, groups=1):
    B, Ci, H, W = x.shape
    Co, Cig, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    out = np.zeros((B, Co, Ho, Wo))
    cpg_in, cpg_out = Ci // groups, Co // groups
    for b in range(B):
        for co in range(Co):
            g = co // cpg_out
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for ci in range(cpg_in):
                        for u in range(k):
                            for v in range(k):
                                acc += (w[co, ci, u, v]
                                        * xp[b, g * cpg_in + ci, i * stride + u, j * stride + v])
                    out[b, co, i, j] = acc + (bias[co] if bias is not None else 0.0)
    return out


def naive_deconv2d(x, w, stride=2, padding=0):
    B, Ci, H, W = x.shape
    _, Co, k, _ = w.shape
    Ho = (H - 1) * stride + k - 2 * padding
    Wo = (W - 1) * stride + k - 2 * padding
    out = np.zeros((B, Co, Ho, Wo))
    for b in range(B):
        for ci in range(Ci):
            for i in range(H):
                for j in range(W):
                    for co in range(Co):
                        for u in range(k):
                            for v in range(k):
                                oi = i * stride + u - padding
                                oj = j * stride + v - padding
                                if 0 <= oi < Ho and 0 <= oj < Wo:
                                    out[b, co, oi, oj] += x[b, ci, i, j] * w[ci, co, u, v]
    return out


def naive_psnr(a, b):
    n = 0
    acc = 0.0
    for x, y in zip(a.reshape(-1).tolist(), b.reshape(-1).tolist()):
        acc += (x - y) ** 2
        n += 1
    mse = acc / n
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(1.0 / mse)


def naive_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    H, W = a.shape
    half = (size - 1) / 2.0
    win = np.empty((size, size))
    for u in range(size):
        for v in range(size):
            win[u, v] = math.exp(-((u - half) ** 2 + (v - half) ** 2) / (2 * sigma * sigma))
    win /= win.sum()
    c1, c2 = k1 * k1, k2 * k2
    vals = []
    for i in range(H - size + 1):
        for j in range(W - size + 1):
            mu_a = mu_b = 0.0
            for u in range(size):
                for v in range(size):
                    mu_a += win[u, v] * a[i + u, j + v]
                    mu_b += win[u, v] * b[i + u, j + v]
            va = vb = vab = 0.0
            for u in range(size):
                for v in range(size):
                    va += win[u, v] * a[i + u, j + v] ** 2
                    vb += win[u, v] * b[i + u, j + v] ** 2
                    vab += win[u, v] * a[i + u, j + v] * b[i + u, j + v]
            va -= mu_a * mu_a
            vb -= mu_b * mu_b
            vab -= mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * vab + c2))
                        / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2)))
    return sum(vals) / len(vals)


def fd_gradient(f, arr, step=1e-5):
    """Central finite differences of scalar f() w.r.t. every entry of arr."""
    g = np.zeros_like(arr)
    flat, gf = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * step)
    return g
