"""Full super-resolution model: stacked conv/transformer blocks plus dual reconstruction.

Layout (default): a 1x1 expansion lifts RGB to the working width, four
physical blocks each run a convolution stage (CIAM), a 1x1 lift to the
transformer width, a transformer stage (CFGT), and a 1x1 projection back,
with a block-level residual. The block sequence is executed ``loop_count``
times per block with shared weights. Two bias-free reconstruction heads
(conv3x3 -> pixel shuffle) upsample the trunk output and the raw input
and are summed.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from . import conv as C
from . import tensor as T
from .conv_stage import CIAM, FORWARD_MODES, MASK_MODES
from .layers import Conv2d, Module
from .tensor import ShapeError, Tensor
from .transformer import CFGT

__all__ = ["ModelConfig", "CFIN", "build_model", "count_multi_adds", "conv_macs"]

MIN_SPATIAL = 8


@dataclasses.dataclass
class ModelConfig:
    scale: int = 4
    conv_channels: int = 48
    transformer_channels: int = 12
    blocks: int = 4
    loop_count: int = 2
    heads: int = 4
    k1: int = 3
    k2: int = 5
    groups: int = 4
    ca_reduction: int = 4
    tau: float = 1.0
    lrelu_slope: float = 0.05
    mask_enabled: bool = True
    mask_mode: str = "gumbel"
    kv_pass: bool = True
    cross_k: bool = True
    updown: bool = True
    second_input: str = "block_input"
    precision: str = "float64"

    def validate(self) -> None:
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.transformer_channels % self.heads:
            raise ValueError("transformer_channels must be divisible by heads")
        if self.transformer_channels % self.groups:
            raise ValueError("transformer_channels must be divisible by groups")
        if self.k1 % 2 == 0 or self.k2 % 2 == 0:
            raise ValueError("context sizes k1/k2 must be odd")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}")
        if self.precision not in ("float64", "float32"):
            raise ValueError("precision must be float64 or float32")
        if self.loop_count < 1 or self.blocks < 1:
            raise ValueError("blocks and loop_count must be >= 1")

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        cfg = cls(**json.loads(text))
        cfg.validate()
        return cfg

    @classmethod
    def toy(cls, scale: int = 2, **overrides) -> "ModelConfig":
        """Desk-scale preset used by the toy training experiment."""
        base = dict(scale=scale, conv_channels=16, transformer_channels=8,
                    blocks=1, loop_count=1, heads=2)
        base.update(overrides)
        return cls(**base)


class CTBlock(Module):
    """One physical block: conv stage, lift, transformer stage, project, residual."""

    def __init__(self, rng, cfg: ModelConfig):
        super().__init__()
        dt = cfg.dtype
        self.ciam = CIAM(rng, cfg.conv_channels, dt, slope=cfg.lrelu_slope, tau=cfg.tau,
                         ca_reduction=cfg.ca_reduction, mask_enabled=cfg.mask_enabled,
                         mask_mode=cfg.mask_mode, updown=cfg.updown)
        self.lift = Conv2d(rng, cfg.conv_channels, cfg.transformer_channels, 1, dt)
        self.cfgt = CFGT(rng, cfg.transformer_channels, dt, k1=cfg.k1, k2=cfg.k2,
                         heads=cfg.heads, groups=cfg.groups, kv_pass=cfg.kv_pass,
                         cross_k=cfg.cross_k, second_input=cfg.second_input)
        self.proj = Conv2d(rng, cfg.transformer_channels, cfg.conv_channels, 1, dt)
        # Each block feeds the next through a residual; at kaiming scale one
        # pass gains ~5x and eight chained passes blow the trunk up to ~1e5.
        # A small output projection starts every block near identity so depth
        # composes safely, while keeping enough signal that every upstream
        # parameter still receives a nonzero gradient on the first step.
        self.proj.weight.data *= np.asarray(0.01, dtype=dt)

    def forward(self, x: Tensor, mode: str, rng) -> Tensor:
        y = self.ciam(x, mode, rng)
        y = self.proj(self.cfgt(self.lift(y)))
        return y + x

    __call__ = forward


def _triangle_taps(scale: int) -> np.ndarray:
    """Per-sub-phase 3-tap triangle filter weights, taps[i, t] over offsets t-1."""
    taps = np.zeros((scale, 3))
    for i in range(scale):
        phase = (i + 0.5) / scale - 0.5
        for t in range(3):
            taps[i, t] = max(0.0, 1.0 - abs(phase - (t - 1)))
    return taps


class CFIN(Module):
    """End-to-end network mapping (B, 3, H, W) in [0, 1] to (B, 3, sH, sW)."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        dt = cfg.dtype
        r = cfg.scale
        r2 = 3 * r * r
        self.shallow = Conv2d(rng, 3, cfg.conv_channels, 1, dt)
        self.blocks = [CTBlock(rng, cfg) for _ in range(cfg.blocks)]
        # reconstruction heads are bias-free so the skip path stays exactly linear
        self.rec_feat = Conv2d(rng, cfg.conv_channels, r2, 3, dt, padding=1, bias=False)
        self.rec_lr = Conv2d(rng, 3, r2, 3, dt, padding=1, bias=False)
        # start the model at a plain triangle-filter upsampler: the raw-input
        # head gets exact interpolation taps and the trunk head starts small,
        # so early training refines an image instead of rebuilding one
        taps = _triangle_taps(r)
        w = np.zeros_like(self.rec_lr.weight.data)
        for c in range(3):
            for i in range(r):
                for j in range(r):
                    w[c * r * r + i * r + j, c] = np.outer(taps[i], taps[j])
        self.rec_lr.weight.data = w.astype(dt)
        self.rec_feat.weight.data *= np.asarray(0.01, dtype=dt)

    def upsample_lr(self, img: Tensor) -> Tensor:
        """The reconstruction head applied to the raw input (exactly linear)."""
        return C.pixel_shuffle(self.rec_lr(img), self.config.scale)

    def forward(self, img: Tensor, mode: str = "eval", rng=None) -> Tensor:
        if mode not in FORWARD_MODES:
            raise ValueError(f"mode must be one of {FORWARD_MODES}")
        if img.ndim != 4 or img.shape[1] != 3:
            raise ShapeError(f"expected RGB input (B, 3, H, W), got {img.shape}")
        if img.shape[2] < MIN_SPATIAL or img.shape[3] < MIN_SPATIAL:
            raise ShapeError(f"input spatial dims must be >= {MIN_SPATIAL}")
        if img.dtype != self.config.dtype:
            img = Tensor(img.data.astype(self.config.dtype), requires_grad=img.requires_grad)
        x = self.shallow(img)
        for block in self.blocks:
            for _ in range(self.config.loop_count):
                x = block(x, mode, rng)
        out = C.pixel_shuffle(self.rec_feat(x), self.config.scale)
        return out + self.upsample_lr(img)

    __call__ = forward


def build_model(cfg: ModelConfig, seed: int = 0) -> CFIN:
    return CFIN(cfg, seed=seed)


# ---- cost accounting ---------------------------------------------------


def conv_macs(c_out: int, c_in: int, k: int, h: int, w: int, groups: int = 1) -> int:
    """Multiply-accumulates of one convolution at output size h x w."""
    return c_out * (c_in // groups) * k * k * h * w


def _cgm_macs(c: int, k: int, g: int, h: int, w: int) -> int:
    branch = 2 * c * k**3 + k * k * c * c // g
    return branch + conv_macs(c, c, k, h, w)


def _cfgt_macs(cfg: ModelConfig, h: int, w: int) -> int:
    c, n = cfg.transformer_channels, h * w
    k2 = cfg.k2 if cfg.cross_k else cfg.k1
    total = 3 * _cgm_macs(c, cfg.k1, cfg.groups, h, w)
    total += 3 * _cgm_macs(c, k2, cfg.groups, h, w)
    total += _cgm_macs(c, 3, cfg.groups, h, w) + _cgm_macs(c, 1, cfg.groups, h, w)
    total += 2 * 2 * c * c * n // cfg.heads  # K Q^T and A V per attention unit
    return total


def _ciam_macs(cfg: ModelConfig, h: int, w: int) -> int:
    c = cfg.conv_channels
    rifu = 2 * conv_macs(c, c, 3, h, w) + 2 * c * c // cfg.ca_reduction
    if cfg.mask_enabled:
        rifu += conv_macs(3, c, 1, h, w)
    total = 3 * rifu
    if cfg.updown:
        total += c * c * 4 * h * w  # stride-2 transposed conv, counted per input pixel
        total += conv_macs(c, c, 3, h, w)  # stride-2 conv back down
    return total


def count_multi_adds(cfg: ModelConfig, out_h: int = 1280, out_w: int = 720) -> int:
    """Multiply-accumulates to produce an ``out_h x out_w`` output.

    Convs count ``C_out * C_in * k^2 * H * W / groups``; attention counts
    its two channel-mixing matmuls; pooling, norms, activations and
    elementwise products are not counted.
    """
    cfg.validate()
    h = -(-out_h // cfg.scale)
    w = -(-out_w // cfg.scale)
    c, ct = cfg.conv_channels, cfg.transformer_channels
    per_block = _ciam_macs(cfg, h, w) + _cfgt_macs(cfg, h, w)
    per_block += 2 * c * ct * h * w  # the two 1x1 lifts around the transformer stage
    total = cfg.blocks * cfg.loop_count * per_block
    total += conv_macs(c, 3, 1, h, w)  # shallow expand
    r2 = 3 * cfg.scale * cfg.scale
    total += conv_macs(r2, c, 3, h, w) + conv_macs(r2, 3, 3, h, w)
    return total
