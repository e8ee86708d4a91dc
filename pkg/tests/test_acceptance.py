"""Acceptance gate: one test per shipping criterion, one verdict line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the measured
numbers next to each verdict. Every criterion enforces its stated
tolerance and runtime budget; none of them may be skipped or weakened.
"""

import itertools
import time

import numpy as np

from cfin import tensor as T
from cfin.archive import (
    BadMagicError,
    BadVersionError,
    TensorMismatchError,
    TruncatedArchiveError,
    load_model,
    save_model,
)
from cfin.attention import CGA
from cfin.conv_stage import RIFU, gumbel_softmax
from cfin.gradcheck import TOLERANCE, run_suite
from cfin.metrics import psnr, ssim
from cfin.model import ModelConfig, build_model
from cfin.tensor import Tensor
from cfin.trainer import run_toy_experiment

from naive_ref import naive_psnr, naive_ssim

RNG = np.random.default_rng


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num} [{'PASS' if ok else 'FAIL'}]: {detail}")
    assert ok, detail


# 1 ------------------------------------------------------------------------


def test_criterion_1_parameter_budget():
    t0 = time.monotonic()
    targets = {2: 675_000, 3: 681_000, 4: 699_000}
    parts, ok = [], True
    for scale, target in targets.items():
        n = build_model(ModelConfig(scale=scale), seed=0).param_count()
        rel = (n - target) / target
        ok = ok and abs(rel) <= 0.10
        parts.append(f"x{scale} {n} ({rel:+.1%} of {target})")
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 5.0
    _verdict(1, ok, f"{'; '.join(parts)}; built in {elapsed:.1f}s (< 5s)")


# 2 ------------------------------------------------------------------------


def test_criterion_2_gradient_oracle():
    t0 = time.monotonic()
    results = run_suite(seeds=range(5))
    elapsed = time.monotonic() - t0
    worst = max(results.values())
    ok = worst < TOLERANCE and elapsed < 300.0
    detail = ", ".join(f"{k}={v:.2e}" for k, v in results.items())
    _verdict(2, ok, f"worst rel err {worst:.2e} (< 1e-4): {detail}; {elapsed:.0f}s (< 5min)")


# 3 ------------------------------------------------------------------------


def test_criterion_3_gumbel_softmax_law():
    t0 = time.monotonic()
    n = 100_000
    rng = RNG(0)
    logits = Tensor(np.tile(np.array([1.0, 0.0, -1.0]), (n, 1))[:, :, None, None])
    sample = gumbel_softmax(logits, tau=1.0, rng=rng).data
    freq = np.bincount(sample.argmax(axis=1).ravel(), minlength=3) / n
    want = np.array([0.6652409558, 0.2447284711, 0.0900305732])
    gap = np.abs(freq - want).max()
    elapsed = time.monotonic() - t0
    ok = gap < 0.01 and elapsed < 10.0
    _verdict(3, ok, f"argmax freq {np.round(freq, 4)} vs softmax {np.round(want, 4)}, "
                    f"max gap {gap:.4f} (< 0.01); {elapsed:.1f}s (< 10s)")


# 4 ------------------------------------------------------------------------


def test_criterion_4_mask_discreteness():
    t0 = time.monotonic()
    rifu = RIFU(RNG(0), 6, np.float64)
    noise = RNG(1)
    data_rng = RNG(2)
    checked = 0
    for i in range(1000):
        x = Tensor(data_rng.uniform(-1, 1, size=(1, 6, 5, 5)))
        # reconstruct the mask from the public pieces and check hardness
        feats = T.leaky_relu(rifu.conv_in(x), rifu.slope)
        probs = gumbel_softmax(rifu.proj_mask(feats), rifu.tau, noise)
        onehot = T.one_hot_argmax_ste(probs, axis=1).data
        assert onehot.shape[1] == 3
        assert np.logical_or(onehot == 0.0, onehot == 1.0).all(), f"iter {i}: not binary"
        assert (onehot.sum(axis=1) == 1.0).all(), f"iter {i}: channel sums != 1"
        checked += onehot[:, 0].size
        if i % 100 == 0:  # eval path must be noise-free and repeatable
            a = rifu(x, mode="eval").data
            b = rifu(x, mode="eval").data
            assert np.array_equal(a, b), f"iter {i}: eval not deterministic"
    elapsed = time.monotonic() - t0
    ok = elapsed < 30.0
    _verdict(4, ok, f"1000 forwards, {checked} pixels all exactly one-hot over 3 classes, "
                    f"eval deterministic; {elapsed:.1f}s (< 30s)")


# 5 ------------------------------------------------------------------------


def test_criterion_5_attention_shape_contract():
    cga = CGA(RNG(0), 48, 3, np.float64, heads=4, groups=4)
    worst_row = 0.0
    shapes = []
    for hw in [(8, 8), (5, 9)]:
        x = Tensor(RNG(1).uniform(-1, 1, size=(2, 48, *hw)))
        _, _, _, attn = cga(x, want_attention=True)
        shapes.append(attn.shape)
        worst_row = max(worst_row, float(np.abs(attn.data.sum(axis=-1) - 1.0).max()))
    ok = all(s == (2, 4, 12, 12) for s in shapes) and worst_row < 1e-10
    _verdict(5, ok, f"attention maps {shapes} == (2, 4, 12, 12) at both resolutions; "
                    f"row-sum error {worst_row:.1e} (< 1e-10)")


# 6 ------------------------------------------------------------------------


def test_criterion_6_ablation_grid_executes():
    t0 = time.monotonic()
    combos = list(itertools.product([True, False], ["gumbel", "softmax", "maxpool"],
                                    [True, False], [True, False]))
    assert len(combos) == 24
    for mask, mode, kv, cross in combos:
        cfg = ModelConfig.toy(mask_enabled=mask, mask_mode=mode, kv_pass=kv, cross_k=cross)
        model = build_model(cfg, seed=0)
        rng = RNG(3)
        x = Tensor(rng.uniform(0, 1, size=(2, 3, 12, 12)), requires_grad=True)
        out = model(x, mode="train", rng=rng)
        assert np.isfinite(out.data).all()
        out.sum().backward()
        for name, p in model.named_params():
            assert p.grad is not None and np.isfinite(p.grad).all(), \
                f"mask={mask} mode={mode} kv={kv} cross={cross}: bad grad at {name}"
    elapsed = time.monotonic() - t0
    _verdict(6, True, f"all 24 flag combinations build, forward, and backward "
                      f"with finite gradients; {elapsed:.0f}s")


# 7 ------------------------------------------------------------------------


def test_criterion_7_toy_learning():
    t0 = time.monotonic()
    res = run_toy_experiment(seed=0, steps=500)
    elapsed = time.monotonic() - t0
    drop_ok = res.loss_drop >= 0.50
    psnr_ok = res.psnr_model >= res.psnr_baseline + 0.1
    ok = drop_ok and psnr_ok and elapsed < 900.0
    _verdict(7, ok, f"smoothed L1 {res.smoothed_first:.4f} -> {res.smoothed_last:.4f} "
                    f"({res.loss_drop:.0%} drop, need >= 50%); held-out Y-PSNR model "
                    f"{res.psnr_model:.2f} dB vs bicubic {res.psnr_baseline:.2f} dB "
                    f"(need +0.1 dB); {elapsed:.0f}s (< 15min)")


# 8 ------------------------------------------------------------------------


def test_criterion_8_serialization(tmp_path):
    t0 = time.monotonic()
    cfg = ModelConfig.toy(conv_channels=8, transformer_channels=4, heads=2)
    model = build_model(cfg, seed=0)
    path = str(tmp_path / "w.bin")
    path2 = str(tmp_path / "w2.bin")
    perturb = RNG(4)
    params = model.params()
    for i in range(1000):
        p = params[int(perturb.integers(len(params)))]
        flat = p.data.reshape(-1)
        flat[int(perturb.integers(flat.size))] += perturb.normal()
        save_model(model, path)
        save_model(load_model(path), path2)
        with open(path, "rb") as fa, open(path2, "rb") as fb:
            assert fa.read() == fb.read(), f"iteration {i}: round trip not byte-identical"

    # every corruption class yields its designated error
    raw = open(path, "rb").read()
    cases = []
    bad = bytearray(raw); bad[:4] = b"XXXX"
    cases.append((bytes(bad), BadMagicError, "magic"))
    bad = bytearray(raw); bad[4:8] = (99).to_bytes(4, "little")
    cases.append((bytes(bad), BadVersionError, "version"))
    cases.append((raw[: len(raw) // 2], TruncatedArchiveError, "truncation"))
    bad = bytearray(raw)
    cfg_len = int.from_bytes(raw[8:12], "little")
    off = 12 + cfg_len + 4
    name_len = int.from_bytes(raw[off : off + 2], "little")
    dims_off = off + 2 + name_len + 2
    d0 = int.from_bytes(raw[dims_off : dims_off + 4], "little")
    bad[dims_off : dims_off + 4] = (d0 + 1).to_bytes(4, "little")
    cases.append((bytes(bad), (TensorMismatchError, TruncatedArchiveError), "shape"))
    for blob, err, label in cases:
        open(path, "wb").write(blob)
        try:
            load_model(path)
            raise AssertionError(f"corruption class {label} was not detected")
        except err:
            pass
    elapsed = time.monotonic() - t0
    ok = elapsed < 60.0
    _verdict(8, ok, f"1000 perturbed round trips byte-identical; magic/version/"
                    f"truncation/shape corruption each raised its error; "
                    f"{elapsed:.0f}s (< 1min)")


# 9 ------------------------------------------------------------------------


def test_criterion_9_metric_oracle():
    rng = RNG(5)
    worst_p, worst_s = 0.0, 0.0
    for _ in range(50):
        a = rng.uniform(size=(14, 16))
        b = np.clip(a + rng.normal(0, rng.uniform(0.01, 0.3), a.shape), 0, 1)
        worst_p = max(worst_p, abs(psnr(a, b) - naive_psnr(a, b)))
        worst_s = max(worst_s, abs(ssim(a, b) - naive_ssim(a, b)))
    same = rng.uniform(size=(16, 16))
    anchors = (
        psnr(same, same) == float("inf")
        and abs(ssim(same, same) - 1.0) < 1e-12
        and abs(psnr(same, same + 1.0 / 255.0) - 48.1308036087) < 1e-6
    )
    ok = worst_p < 1e-9 and worst_s < 1e-9 and anchors
    _verdict(9, ok, f"50 pairs vs naive loops: PSNR gap {worst_p:.1e}, SSIM gap "
                    f"{worst_s:.1e} (< 1e-9); anchors inf / 1.0 / 48.1308 dB hold")
