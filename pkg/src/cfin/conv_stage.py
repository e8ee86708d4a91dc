"""Convolution stage: masked residual filtering units and their mixer.

RIFU filters its features through a per-pixel hard selection mask drawn
from a Gumbel-Softmax over a small number of mask classes. The mask is
one-hot in the class axis; the indicator of the designated keep class is
broadcast-multiplied across all feature channels. Training uses the
straight-through trick (hard forward, soft backward); ``mode="soft"``
swaps in the differentiable relaxation so gradients can be verified by
finite differences.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import ChannelAttention, Conv2d, Deconv2d, Module
from .tensor import ShapeError, Tensor

__all__ = ["gumbel_softmax", "RIFU", "CIAM", "MASK_CLASSES", "MASK_MODES", "FORWARD_MODES"]

MASK_CLASSES = 3
KEEP_CLASS = 0
MASK_MODES = ("gumbel", "softmax", "maxpool")
FORWARD_MODES = ("train", "eval", "soft")


def gumbel_softmax(logits: Tensor, tau: float = 1.0, rng: np.random.Generator | None = None) -> Tensor:
    """Softmax over the class axis of perturbed, temperature-scaled logits.

    With ``rng`` given, i.i.d. standard Gumbel noise is added per element;
    without it (eval) the result is a plain tempered softmax. The argmax
    of the noisy version is distributed as Categorical(softmax(logits)).
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = logits
    if rng is not None:
        noise = rng.gumbel(size=logits.shape).astype(logits.dtype)
        z = logits + Tensor(noise)
    return T.softmax(z * (1.0 / tau), axis=1)


class RIFU(Module):
    """Residual unit with learned per-pixel feature masking.

    x -> conv3x3 -> leaky_relu -> X
    X -> 1x1 projection -> mask logits over MASK_CLASSES
    mask = indicator(argmax class == keep class), broadcast over channels
    y = channel_attention(conv3x3(mask * X)) + x
    """

    def __init__(self, rng, channels, dtype, slope=0.05, tau=1.0, ca_reduction=4,
                 mask_enabled=True, mask_mode="gumbel"):
        super().__init__()
        if mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        self.slope, self.tau = slope, tau
        self.mask_enabled, self.mask_mode = mask_enabled, mask_mode
        self.conv_in = Conv2d(rng, channels, channels, 3, dtype, padding=1, weight_norm=True)
        if mask_enabled:
            self.proj_mask = Conv2d(rng, channels, MASK_CLASSES, 1, dtype, weight_norm=True)
        self.conv_out = Conv2d(rng, channels, channels, 3, dtype, padding=1, weight_norm=True)
        self.ca = ChannelAttention(rng, channels, dtype, reduction=ca_reduction)

    def _mask(self, feats: Tensor, mode: str, rng) -> Tensor:
        logits = self.proj_mask(feats)
        if self.mask_mode == "maxpool":
            onehot = T.one_hot_argmax_route(logits, axis=1)
        else:
            noise_rng = rng if (mode == "train" and self.mask_mode == "gumbel") else None
            if mode == "train" and self.mask_mode == "gumbel" and rng is None:
                raise ValueError("train mode with a gumbel mask needs an rng")
            probs = gumbel_softmax(logits, self.tau, noise_rng)
            if mode == "soft":
                return probs[:, KEEP_CLASS : KEEP_CLASS + 1]
            onehot = T.one_hot_argmax_ste(probs, axis=1)
        oh = onehot.data
        assert np.logical_or(oh == 0.0, oh == 1.0).all()
        assert np.array_equal(oh.sum(axis=1), np.ones_like(oh.sum(axis=1)))
        return onehot[:, KEEP_CLASS : KEEP_CLASS + 1]

    def forward(self, x: Tensor, mode: str = "eval", rng=None) -> Tensor:
        if mode not in FORWARD_MODES:
            raise ValueError(f"mode must be one of {FORWARD_MODES}")
        feats = T.leaky_relu(self.conv_in(x), self.slope)
        if self.mask_enabled:
            feats = self._mask(feats, mode, rng) * feats
        return self.ca(self.conv_out(feats)) + x

    __call__ = forward


class CIAM(Module):
    """Mixer of three RIFUs with a gated up/down context branch.

    x1 = rifu1(x)
    x2 = down(up(x)) * sigmoid(rifu2(x1))    (or x * gate when the branch is off)
    x3 = rifu3(x2 + x1) + x
    """

    def __init__(self, rng, channels, dtype, slope=0.05, tau=1.0, ca_reduction=4,
                 mask_enabled=True, mask_mode="gumbel", updown=True):
        super().__init__()
        self.updown = updown
        kw = dict(slope=slope, tau=tau, ca_reduction=ca_reduction,
                  mask_enabled=mask_enabled, mask_mode=mask_mode)
        self.rifu1 = RIFU(rng, channels, dtype, **kw)
        self.rifu2 = RIFU(rng, channels, dtype, **kw)
        self.rifu3 = RIFU(rng, channels, dtype, **kw)
        if updown:
            self.up = Deconv2d(rng, channels, channels, 2, dtype, stride=2)
            self.down = Conv2d(rng, channels, channels, 3, dtype, stride=2, padding=1)

    def forward(self, x: Tensor, mode: str = "eval", rng=None) -> Tensor:
        if self.updown and (x.shape[2] < 2 or x.shape[3] < 2):
            raise ShapeError("spatial dims too small for the stride-2 round trip")
        x1 = self.rifu1(x, mode, rng)
        gate = T.sigmoid(self.rifu2(x1, mode, rng))
        branch = self.down(self.up(x)) if self.updown else x
        x2 = branch * gate
        return self.rifu3(x2 + x1, mode, rng) + x

    __call__ = forward
