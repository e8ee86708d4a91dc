"""Context-modulated convolution kernels and channel-wise attention.

CGM builds a per-sample convolution kernel: a shared base kernel is
scaled elementwise by the sum of two modulation branches computed from a
pooled k x k context of the input. Attention (CGA) projects Q/K/V through
three CGMs and attends across channels rather than positions, so the
attention map is (B, heads, C/heads, C/heads) regardless of resolution.
"""

from __future__ import annotations

import numpy as np

from . import conv as C
from . import tensor as T
from .layers import Module, kaiming_uniform
from .tensor import ShapeError, Tensor

__all__ = ["CGM", "CGA"]

# Attention logits contract two CGM projections over every spatial position,
# so kernel magnitudes enter squared and multiplied by H*W; a conservative
# base-kernel scale keeps the row softmax unsaturated at the start of
# training (otherwise the temperature and projection weights sit in a
# zero-gradient plateau).
_BASE_INIT_SCALE = 0.01


class CGM(Module):
    """Convolution with a context-gated, per-sample kernel.

    context = adaptive max pool of x down to (k, k)
    branch A: shared linear k^2 -> k -> k^2 over the context rows,
              reshaped onto the kernel's output-channel axis
    branch B: grouped linear over the context channels (one shared
              (C/g, C/g) weight), placed on the input-channel axis
    kernel'[b] = base * (A[b] + B[b]);  y[b] = conv2d(x[b], kernel'[b])
    """

    def __init__(self, rng, channels, k, dtype, groups=4):
        super().__init__()
        if k % 2 == 0:
            raise ShapeError(f"context kernel size must be odd, got {k}")
        if channels % groups:
            raise ShapeError(f"channels={channels} not divisible by groups={groups}")
        self.channels, self.k, self.groups = channels, k, groups
        cg = channels // groups
        base = kaiming_uniform(rng, (channels, channels, k, k), channels * k * k, dtype)
        self.base = Tensor((base * _BASE_INIT_SCALE).astype(dtype), requires_grad=True)
        self.w1 = Tensor(kaiming_uniform(rng, (k * k, k), k * k, dtype), requires_grad=True)
        self.b1 = Tensor(np.zeros(k, dtype=dtype), requires_grad=True)
        self.w2 = Tensor(kaiming_uniform(rng, (k, k * k), k, dtype), requires_grad=True)
        # modulation starts neutral: the two branch biases sum to one, so the
        # effective kernel begins at the base kernel
        self.b2 = Tensor(np.full(k * k, 0.5, dtype=dtype), requires_grad=True)
        self.wg = Tensor(kaiming_uniform(rng, (cg, cg), cg, dtype), requires_grad=True)
        self.bg = Tensor(np.full(channels, 0.5, dtype=dtype), requires_grad=True)

    def modulated_kernel(self, x: Tensor) -> Tensor:
        B, Cc, H, W = x.shape
        k, g = self.k, self.groups
        if Cc != self.channels:
            raise ShapeError(f"expected {self.channels} channels, got {Cc}")
        ctx = T.max_pool_to(x, k)  # (B, C, k, k)
        flat = ctx.reshape((B, Cc, k * k))
        spatial = T.matmul(T.matmul(flat, self.w1) + self.b1, self.w2) + self.b2
        spatial = spatial.reshape((B, Cc, 1, k, k))
        grouped = flat.reshape((B, g, Cc // g, k * k)).transpose((0, 1, 3, 2))
        grouped = T.matmul(grouped, self.wg).transpose((0, 1, 3, 2)).reshape((B, Cc, k * k))
        grouped = (grouped + self.bg.reshape((Cc, 1))).reshape((B, 1, Cc, k, k))
        return self.base.reshape((1, Cc, Cc, k, k)) * (spatial + grouped)

    def forward(self, x: Tensor) -> Tensor:
        B, Cc, H, W = x.shape
        k = self.k
        if H < k or W < k:
            raise ShapeError(f"spatial dims {H}x{W} smaller than context size {k}")
        kern = self.modulated_kernel(x)
        xr = x.reshape((1, B * Cc, H, W))
        kr = kern.reshape((B * Cc, Cc, k, k))
        y = C.conv2d(xr, kr, stride=1, padding=(k - 1) // 2, groups=B)
        return y.reshape((B, Cc, H, W))

    __call__ = forward


class CGA(Module):
    """Channel-transposed attention with per-head learned temperature.

    Q, K, V come from three CGMs and are reshaped to (B, h, C/h, H*W).
    Externally injected K/V (from a sibling attention unit) are added to
    the local projections before use. Attention logits are K Q^T scaled
    by 1/temperature; softmax rows mix value channels.
    """

    def __init__(self, rng, channels, k, dtype, heads=4, groups=4):
        super().__init__()
        if channels % heads:
            raise ShapeError(f"channels={channels} not divisible by heads={heads}")
        self.channels, self.heads = channels, heads
        self.cgm_q = CGM(rng, channels, k, dtype, groups)
        self.cgm_k = CGM(rng, channels, k, dtype, groups)
        self.cgm_v = CGM(rng, channels, k, dtype, groups)
        self.temperature = Tensor(np.ones((heads, 1, 1), dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor, injected: tuple[Tensor, Tensor] | None = None,
                want_attention: bool = False):
        B, Cc, H, W = x.shape
        h, c, n = self.heads, self.channels // self.heads, H * W
        q = self.cgm_q(x).reshape((B, h, c, n))
        kk = self.cgm_k(x).reshape((B, h, c, n))
        v = self.cgm_v(x).reshape((B, h, c, n))
        if injected is not None:
            k_in, v_in = injected
            if k_in.shape != kk.shape or v_in.shape != v.shape:
                raise ShapeError(
                    f"injected K/V shape {k_in.shape}/{v_in.shape} does not match {kk.shape}")
            kk = kk + k_in
            v = v + v_in
        logits = T.matmul(kk, q.transpose((0, 1, 3, 2))) / self.temperature
        attn = T.softmax(logits, axis=-1)  # (B, h, c, c)
        out = T.matmul(attn, v).reshape((B, Cc, H, W))
        if want_attention:
            return out, kk, v, attn
        return out, kk, v

    __call__ = forward
