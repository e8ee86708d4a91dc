"""Training loop pieces: L1 loss, cosine learning-rate schedule, Adam.

Desk-scale by design; the toy experiment (a few hundred steps on a batch
of synthetic texture patches) exists to demonstrate that the gradient
path trains end to end, not to reach benchmark quality.
"""

from __future__ import annotations

import csv
import dataclasses
import math

import numpy as np

from . import tensor as T
from .data import PatchSampler, synth_textures
from .metrics import psnr
from .model import CFIN, ModelConfig, build_model
from .tensor import Tensor

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "l1_loss",
    "cosine_lr",
    "Adam",
    "train",
    "ToyResult",
    "run_toy_experiment",
]


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


@dataclasses.dataclass
class TrainConfig:
    steps: int = 500
    batch: int = 8
    patch: int = 16
    lr_init: float = 5e-4
    lr_final: float = 6.25e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error; the subgradient at zero difference is zero."""
    if pred.shape != target.shape:
        raise T.ShapeError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    return T.absolute(pred - target).mean()


def cosine_lr(step: int, steps: int, lr_init: float, lr_final: float) -> float:
    """Half-cosine decay from ``lr_init`` (step 0) to ``lr_final`` (step ``steps``)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t = min(max(step, 0), steps)
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * t / steps))


class Adam:
    """Adam with bias correction; state arrays match parameter dtype."""

    def __init__(self, params: list[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            p.data = p.data - lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def train(model: CFIN, sampler: PatchSampler, cfg: TrainConfig,
          history_path: str | None = None) -> list[tuple[int, float, float]]:
    """Run the loop; returns [(step, lr, loss)] and optionally writes it as CSV."""
    rng = np.random.default_rng(cfg.seed)
    params = model.params()
    opt = Adam(params, cfg.beta1, cfg.beta2, cfg.eps)
    history: list[tuple[int, float, float]] = []
    dt = model.config.dtype
    for step in range(cfg.steps):
        lr_now = cosine_lr(step, cfg.steps, cfg.lr_init, cfg.lr_final)
        lr_batch, hr_batch = sampler.sample(cfg.batch)
        try:
            pred = model(Tensor(lr_batch.astype(dt)), mode="train", rng=rng)
            loss = l1_loss(pred, Tensor(hr_batch.astype(dt)))
            val = loss.item()
            if not math.isfinite(val):
                raise TrainingDiverged(step)
            opt.zero_grad()
            loss.backward()
        except T.NonFiniteError as e:
            raise TrainingDiverged(step) from e
        opt.step(lr_now)
        history.append((step, lr_now, val))
    if history_path:
        with open(history_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "lr", "loss"])
            w.writerows(history)
    return history


# ---- toy end-to-end experiment -------------------------------------------


@dataclasses.dataclass
class ToyResult:
    history: list[tuple[int, float, float]]
    smoothed_first: float
    smoothed_last: float
    psnr_model: float
    psnr_baseline: float

    @property
    def loss_drop(self) -> float:
        return 1.0 - self.smoothed_last / self.smoothed_first


def smoothed(values: list[float], window: int = 50) -> list[float]:
    out = []
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out.append(sum(values[lo : i + 1]) / (i + 1 - lo))
    return out


def run_toy_experiment(seed: int = 0, steps: int = 500, history_path: str | None = None,
                       model: CFIN | None = None) -> ToyResult:
    """Train the toy preset on synthetic textures and score against bicubic.

    64 training images and 8 held-out images, 32x32 HR at x2. Reported
    PSNR is Y-channel with a scale-sized border shave, model output
    clamped to [0, 1] the way exported images are.
    """
    from .data import bicubic_resize, rgb_to_y

    data_rng = np.random.default_rng(seed + 1000)
    images = synth_textures(72, 32, data_rng)
    train_imgs, held = images[:64], images[64:]
    if model is None:
        model = build_model(ModelConfig.toy(), seed=seed)
    cfg = TrainConfig(steps=steps, seed=seed)
    sampler = PatchSampler(train_imgs, cfg.patch, model.config.scale,
                           np.random.default_rng(seed + 2000))
    history = train(model, sampler, cfg, history_path=history_path)
    losses = [h[2] for h in history]
    sm = smoothed(losses)
    window = min(50, len(sm))

    s = model.config.scale
    scores_model, scores_base = [], []
    with T.no_grad():
        for hr in held:
            lr = bicubic_resize(hr, 1.0 / s)
            out = model(Tensor(lr[None].astype(model.config.dtype)), mode="eval")
            sr = np.clip(out.data[0], 0.0, 1.0)
            up = np.clip(bicubic_resize(lr, float(s)), 0.0, 1.0)
            scores_model.append(psnr(rgb_to_y(sr), rgb_to_y(hr), shave=s))
            scores_base.append(psnr(rgb_to_y(up), rgb_to_y(hr), shave=s))
    return ToyResult(
        history=history,
        smoothed_first=sm[window - 1],
        smoothed_last=sm[-1],
        psnr_model=float(np.mean(scores_model)),
        psnr_baseline=float(np.mean(scores_base)),
    )
