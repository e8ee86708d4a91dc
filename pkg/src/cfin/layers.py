"""Parametered layers on top of the tensor core.

``Module`` is a minimal parameter container: attributes that are Tensors
with ``requires_grad`` become named parameters, attributes that are
Modules (or lists of Modules) become children. Registration order is
construction order, which keeps parameter naming and initialization
deterministic for a given seed.
"""

from __future__ import annotations

import numpy as np

from . import conv as C
from . import tensor as T
from .tensor import ShapeError, Tensor

__all__ = [
    "Module",
    "Conv2d",
    "Deconv2d",
    "Linear",
    "LayerNorm2d",
    "ChannelAttention",
    "kaiming_uniform",
]


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_params(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, child in self._children.items():
            yield from child.named_params(prefix + name + ".")

    def params(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad = None

    def param_count(self) -> int:
        return sum(p.size for p in self.params())


class Conv2d(Module):
    """Standard convolution layer, optionally weight-normalized.

    With ``weight_norm`` the stored direction ``v`` and per-output-channel
    gain ``g`` give the effective kernel ``g * v / ||v||``, so the kernel's
    per-channel norm is exactly ``g``.
    """

    def __init__(self, rng, in_ch, out_ch, k, dtype, stride=1, padding=0, groups=1,
                 bias=True, weight_norm=False):
        super().__init__()
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, k
        self.stride, self.padding, self.groups = stride, padding, groups
        self.weight_norm = weight_norm
        fan_in = (in_ch // groups) * k * k
        v = kaiming_uniform(rng, (out_ch, in_ch // groups, k, k), fan_in, dtype)
        self.weight = Tensor(v, requires_grad=True)
        if weight_norm:
            norms = np.sqrt((v.astype(np.float64) ** 2).sum(axis=(1, 2, 3)))
            self.gain = Tensor(norms.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True) if bias else None

    def effective_weight(self) -> Tensor:
        if not self.weight_norm:
            return self.weight
        sq = (self.weight * self.weight).sum(axis=(1, 2, 3), keepdims=True)
        return self.weight * (self.gain.reshape((self.out_ch, 1, 1, 1)) / T.sqrt(sq))

    def forward(self, x: Tensor) -> Tensor:
        return C.conv2d(x, self.effective_weight(), self.bias,
                        stride=self.stride, padding=self.padding, groups=self.groups)

    __call__ = forward


class Deconv2d(Module):
    """Transposed convolution layer (used for the stride-2 upsample)."""

    def __init__(self, rng, in_ch, out_ch, k, dtype, stride=2, padding=0, bias=True):
        super().__init__()
        self.stride, self.padding = stride, padding
        fan_in = in_ch * k * k
        self.weight = Tensor(kaiming_uniform(rng, (in_ch, out_ch, k, k), fan_in, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return C.deconv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    __call__ = forward


class Linear(Module):
    def __init__(self, rng, in_f, out_f, dtype, bias=True):
        super().__init__()
        self.weight = Tensor(kaiming_uniform(rng, (in_f, out_f), in_f, dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_f, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y

    __call__ = forward


class LayerNorm2d(Module):
    """Per-position normalization over the channel axis of (B, C, H, W)."""

    def __init__(self, channels, dtype, eps: float = 1e-12):
        super().__init__()
        self.eps = eps
        self.gain = Tensor(np.ones((1, channels, 1, 1), dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros((1, channels, 1, 1), dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, axis=1, eps=self.eps)

    __call__ = forward


class ChannelAttention(Module):
    """Squeeze/excite gate: pooled descriptor -> bottleneck -> sigmoid scale."""

    def __init__(self, rng, channels, dtype, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(rng, channels, hidden, dtype)
        self.fc2 = Linear(rng, hidden, channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        B, Cc = x.shape[0], x.shape[1]
        s = T.global_avg_pool(x).reshape((B, Cc))
        s = T.sigmoid(self.fc2(T.relu(self.fc1(s))))
        return x * s.reshape((B, Cc, 1, 1))

    __call__ = forward
