"""Reverse-mode autodiff tensors over numpy arrays.

Values are dense numpy arrays (model tensors are rank-4 ``(B, C, H, W)``;
intermediates inside ops may be any rank). Every differentiable op records
its inputs and a backward closure on the result node, forming an implicit
tape that ``Tensor.backward`` replays in reverse topological order.

Two numeric regimes are supported: float64 for verification and training
experiments, float32 for lightweight inference. Ops never mutate their
inputs, and every op output is checked for NaN/Inf, which raises instead
of silently propagating.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "DisconnectedGraphError",
    "no_grad",
    "set_finite_checks",
    "backward",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "absolute",
    "relu",
    "leaky_relu",
    "sigmoid",
    "gelu",
    "matmul",
    "softmax",
    "layer_norm",
    "global_avg_pool",
    "max_pool_to",
    "one_hot_argmax_ste",
    "one_hot_argmax_route",
]


class ShapeError(ValueError):
    """An operation's shape contract was violated."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class DisconnectedGraphError(RuntimeError):
    """backward() found no differentiable leaf reachable from the loss."""


_GRAD_ENABLED = True
_FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf guard on op outputs (on by default)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Context manager that disables graph recording (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr: np.ndarray, op: str) -> None:
    if _FINITE_CHECKS and not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {op}")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if not np.issubdtype(arr.dtype, np.floating):
                arr = arr.astype(np.float64)
        _check_finite(arr, "Tensor()")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    # ---- basic introspection ----------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op})"

    # ---- autodiff ----------------------------------------------------

    def backward(self, return_leaf_map: bool = False):
        """Accumulate gradients of this scalar into every reachable leaf.

        Intermediate nodes are released afterwards; the graph is single
        use. Optionally returns ``{id(leaf): grad array}``.
        """
        if self.size != 1:
            raise ShapeError("backward() requires a scalar loss")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        leaves: dict[int, Tensor] = {}
        for node in reversed(order):
            if node._backward is not None:
                if node.grad is None:
                    continue
                _check_finite(node.grad, f"backward of {node._op}")
                node._backward(node.grad)
            elif node.requires_grad and node.grad is not None:
                leaves[id(node)] = node
        if not leaves:
            raise DisconnectedGraphError(
                "loss is not connected to any tensor with requires_grad"
            )
        leaf_map = {k: v.grad for k, v in leaves.items()} if return_leaf_map else None
        # release the tape: drop closures and intermediate grads
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node.grad = None
        return leaf_map


def backward(loss: Tensor, params: Iterable[Tensor] | None = None):
    """Run reverse-mode accumulation from ``loss``.

    Returns a map from parameter to gradient array. With ``params`` given
    the map covers exactly those tensors (gradient ``None`` if unreached);
    otherwise it covers every reachable leaf keyed by ``id``.
    """
    leaf_map = loss.backward(return_leaf_map=True)
    if params is None:
        return leaf_map
    return {p: p.grad for p in params}


def _make(data: np.ndarray, parents: tuple[Tensor, ...], bwd, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = bwd
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


# ---- arithmetic -------------------------------------------------------


def _add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bwd(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), bwd, "add")


def _mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bwd(g):
        _acc(a, _unbroadcast(g * b.data, a.shape))
        _acc(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bwd, "mul")


def _div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def bwd(g):
        _acc(a, _unbroadcast(g / b.data, a.shape))
        _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), bwd, "div")


def _neg(a: Tensor) -> Tensor:
    def bwd(g):
        _acc(a, -g)

    return _make(-a.data, (a,), bwd, "neg")


def _pow_scalar(a: Tensor, p: float) -> Tensor:
    data = a.data**p

    def bwd(g):
        _acc(a, g * p * a.data ** (p - 1))

    return _make(data, (a,), bwd, "pow")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def bwd(g):
        _acc(a, g * data)

    return _make(data, (a,), bwd, "exp")


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def bwd(g):
        _acc(a, g / a.data)

    return _make(data, (a,), bwd, "log")


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def bwd(g):
        _acc(a, g * 0.5 / data)

    return _make(data, (a,), bwd, "sqrt")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def bwd(g):
        _acc(a, g * (1.0 - data * data))

    return _make(data, (a,), bwd, "tanh")


def absolute(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def bwd(g):
        # subgradient 0 at the kink
        _acc(a, g * np.sign(a.data))

    return _make(data, (a,), bwd, "abs")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        _acc(a, g * mask)

    return _make(a.data * mask, (a,), bwd, "relu")


def leaky_relu(a: Tensor, slope: float = 0.05) -> Tensor:
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope).astype(a.dtype, copy=False)

    def bwd(g):
        _acc(a, g * scale)

    return _make(a.data * scale, (a,), bwd, "leaky_relu")


def sigmoid(a: Tensor) -> Tensor:
    # numerically stable two-sided evaluation
    d = a.data
    data = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))

    def bwd(g):
        _acc(a, g * data * (1.0 - data))

    return _make(data, (a,), bwd, "sigmoid")


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh form)."""
    inner = (a * _GELU_C) + (a * a * a) * (_GELU_C * 0.044715)
    return a * 0.5 * (tanh(inner) + 1.0)


# ---- reductions and shape ops -----------------------------------------


def _sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, a.shape).copy())
            return
        gg = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % a.ndim for ax in axes):
                gg = np.expand_dims(gg, ax)
        _acc(a, np.broadcast_to(gg, a.shape).copy())

    return _make(np.asarray(data), (a,), bwd, "sum")


def _mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.shape[ax % a.ndim]
    return _sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def _reshape(a: Tensor, shape) -> Tensor:
    orig = a.shape

    def bwd(g):
        _acc(a, g.reshape(orig))

    return _make(a.data.reshape(shape), (a,), bwd, "reshape")


def _transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(int(i) for i in np.argsort(axes))

    def bwd(g):
        _acc(a, g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), bwd, "transpose")


def _getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[key] = g
        _acc(a, full)

    return _make(data, (a,), bwd, "slice")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects tensors of rank >= 2")
    data = np.matmul(a.data, b.data)

    def bwd(g):
        _acc(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _acc(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(data, (a, b), bwd, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; rows sum to one."""
    shift = np.max(x.data, axis=axis, keepdims=True)
    e = exp(x - Tensor(shift))
    return e / _sum(e, axis=axis, keepdims=True)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, axis: int = 1, eps: float = 1e-12) -> Tensor:
    """Normalize to zero mean/unit variance along ``axis``, then affine."""
    mu = _mean(x, axis=axis, keepdims=True)
    xc = x - mu
    var = _mean(xc * xc, axis=axis, keepdims=True)
    xn = xc / sqrt(var + eps)
    return xn * gain + bias


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C, 1, 1) spatial mean."""
    if x.ndim != 4:
        raise ShapeError("global_avg_pool expects (B, C, H, W)")
    return _mean(x, axis=(2, 3), keepdims=True)


def max_pool_to(x: Tensor, k: int) -> Tensor:
    """Adaptive max pool of (B, C, H, W) down to (B, C, k, k).

    Window boundaries split H and W as evenly as possible; gradients route
    to each window's argmax (first occurrence on ties).
    """
    if x.ndim != 4:
        raise ShapeError("max_pool_to expects (B, C, H, W)")
    B, C, H, W = x.shape
    if k < 1 or H < k or W < k:
        raise ShapeError(f"cannot pool {H}x{W} down to {k}x{k}")
    data = np.empty((B, C, k, k), dtype=x.dtype)
    argpos = []
    bi = np.arange(B)[:, None]
    ci = np.arange(C)[None, :]
    for i in range(k):
        hs, he = (i * H) // k, -(((i + 1) * -H) // k)
        for j in range(k):
            ws, we = (j * W) // k, -(((j + 1) * -W) // k)
            win = x.data[:, :, hs:he, ws:we].reshape(B, C, -1)
            am = win.argmax(axis=-1)
            data[:, :, i, j] = np.take_along_axis(win, am[..., None], axis=-1)[..., 0]
            argpos.append((hs + am // (we - ws), ws + am % (we - ws)))

    def bwd(g):
        dx = np.zeros_like(x.data)
        idx = 0
        for i in range(k):
            for j in range(k):
                r, c = argpos[idx]
                np.add.at(dx, (bi, ci, r, c), g[:, :, i, j])
                idx += 1
        _acc(x, dx)

    return _make(data, (x,), bwd, "max_pool_to")


# ---- discrete selection ------------------------------------------------


def one_hot_argmax_ste(probs: Tensor, axis: int = 1) -> Tensor:
    """Hard one-hot of the argmax with straight-through backward.

    Forward emits exact {0, 1} indicators; backward passes the upstream
    gradient to ``probs`` unchanged, as if the op were the identity.
    """
    am = probs.data.argmax(axis=axis)
    data = np.zeros_like(probs.data)
    np.put_along_axis(data, np.expand_dims(am, axis), 1.0, axis=axis)

    def bwd(g):
        _acc(probs, g)

    return _make(data, (probs,), bwd, "one_hot_ste")


def one_hot_argmax_route(logits: Tensor, axis: int = 1) -> Tensor:
    """Hard one-hot of the argmax with max-pool style backward.

    The upstream gradient flows only into the selected logit, the way a
    max reduction routes gradient to its argmax.
    """
    am = logits.data.argmax(axis=axis)
    data = np.zeros_like(logits.data)
    np.put_along_axis(data, np.expand_dims(am, axis), 1.0, axis=axis)

    def bwd(g):
        _acc(logits, g * data)

    return _make(data, (logits,), bwd, "one_hot_route")


# ---- operator wiring ----------------------------------------------------


def _as_binary(fn):
    def op(self, other):
        return fn(self, _coerce(other, self))

    return op


def _as_rbinary(fn):
    def op(self, other):
        return fn(_coerce(other, self), self)

    return op


Tensor.__add__ = _as_binary(_add)
Tensor.__radd__ = _as_rbinary(_add)
Tensor.__mul__ = _as_binary(_mul)
Tensor.__rmul__ = _as_rbinary(_mul)
Tensor.__sub__ = _as_binary(lambda a, b: _add(a, _neg(b)))
Tensor.__rsub__ = _as_rbinary(lambda a, b: _add(a, _neg(b)))
Tensor.__truediv__ = _as_binary(_div)
Tensor.__rtruediv__ = _as_rbinary(_div)
Tensor.__neg__ = _neg
Tensor.__pow__ = _pow_scalar
Tensor.__matmul__ = _as_binary(matmul)
Tensor.__getitem__ = _getitem
Tensor.sum = _sum
Tensor.mean = _mean
Tensor.reshape = _reshape
Tensor.transpose = _transpose
