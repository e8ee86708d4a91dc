"""Transformer stage: two chained channel-attention units plus a gated projection.

The two attention units see different context sizes (k1, k2), and the
first unit's K/V are injected into the second, which is what couples the
two receptive scales. Each sub-block is post-normalized with the residual
added outside the norm, so zeroing all attention/projection weights makes
the whole stage an exact identity.
"""

from __future__ import annotations

from . import tensor as T
from .attention import CGA, CGM
from .layers import LayerNorm2d, Module
from .tensor import Tensor

__all__ = ["IGP", "CFGT"]


class IGP(Module):
    """Gated projection: two context-modulated convs around a GELU."""

    def __init__(self, rng, channels, dtype, groups=4):
        super().__init__()
        self.cgm_a = CGM(rng, channels, 3, dtype, groups)
        self.cgm_b = CGM(rng, channels, 1, dtype, groups)

    def core(self, x: Tensor) -> Tensor:
        return self.cgm_b(T.gelu(self.cgm_a(x)))

    def forward(self, x: Tensor) -> Tensor:
        return self.core(x) + x

    __call__ = forward


class CFGT(Module):
    """t1 = norm(cga1(t)) + t; t2 = norm(cga2(src, inj)) + t1; out = norm(igp(t2)) + t2.

    Flags: ``kv_pass`` injects cga1's K/V into cga2; ``cross_k`` gives the
    second unit its own (larger) context size, otherwise both use k1;
    ``second_input`` selects whether cga2 reads the block input (default)
    or the first sub-block's output.
    """

    def __init__(self, rng, channels, dtype, k1=3, k2=5, heads=4, groups=4,
                 kv_pass=True, cross_k=True, second_input="block_input"):
        super().__init__()
        if second_input not in ("block_input", "first_output"):
            raise ValueError(f"bad second_input: {second_input}")
        self.kv_pass = kv_pass
        self.second_input = second_input
        k2_eff = k2 if cross_k else k1
        self.cga1 = CGA(rng, channels, k1, dtype, heads, groups)
        self.cga2 = CGA(rng, channels, k2_eff, dtype, heads, groups)
        self.igp = IGP(rng, channels, dtype, groups)
        self.norm1 = LayerNorm2d(channels, dtype)
        self.norm2 = LayerNorm2d(channels, dtype)
        self.norm3 = LayerNorm2d(channels, dtype)

    def forward(self, t: Tensor) -> Tensor:
        o1, k_used, v_used = self.cga1(t)
        t1 = self.norm1(o1) + t
        src = t if self.second_input == "block_input" else t1
        inj = (k_used, v_used) if self.kv_pass else None
        o2, _, _ = self.cga2(src, injected=inj)
        t2 = self.norm2(o2) + t1
        return self.norm3(self.igp.core(t2)) + t2

    __call__ = forward
