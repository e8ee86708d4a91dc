"""Command-line front end.

Every failure exits nonzero with a single machine-parseable line on
stderr of the form ``error: <category>: <detail>``. The ``CFIN_THREADS``
environment variable caps internal numeric parallelism.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import archive, gradcheck
from .data import ImageBuf, read_png, rgb_to_y, write_png
from .metrics import psnr, ssim
from .model import ModelConfig, build_model, count_multi_adds
from .tensor import Tensor, no_grad
from .trainer import run_toy_experiment


def _fail(category: str, detail: str) -> int:
    print(f"error: {category}: {detail}", file=sys.stderr)
    return 1


def _cmd_init(args) -> int:
    cfg = ModelConfig(scale=args.scale)
    model = build_model(cfg, seed=args.seed)
    archive.save_model(model, args.out)
    print(f"wrote {args.out}: scale x{cfg.scale}, {model.param_count()} params, seed {args.seed}")
    return 0


def _cmd_infer(args) -> int:
    model = archive.load_model(args.model)
    img = read_png(args.input)
    x = Tensor(img.to_array(model.config.dtype)[None])
    with no_grad():
        y = model(x, mode="eval")
    write_png(ImageBuf.from_array(y.data[0]), args.out)
    print(f"wrote {args.out}: {y.shape[3]}x{y.shape[2]} (x{model.config.scale})")
    return 0


def _cmd_train_toy(args) -> int:
    model = build_model(ModelConfig.toy(), seed=args.seed)
    result = run_toy_experiment(seed=args.seed, steps=args.steps,
                                history_path=args.history, model=model)
    if args.checkpoint:
        archive.save_model(model, args.checkpoint)
    print(f"smoothed loss {result.smoothed_first:.5f} -> {result.smoothed_last:.5f} "
          f"({100 * result.loss_drop:.1f}% drop)")
    print(f"held-out PSNR: model {result.psnr_model:.2f} dB, "
          f"bicubic {result.psnr_baseline:.2f} dB")
    return 0


def _cmd_metrics(args) -> int:
    a = read_png(args.sr).to_array()
    b = read_png(args.hr).to_array()
    if a.shape != b.shape:
        return _fail("shape", f"image dims differ: {a.shape[1:]} vs {b.shape[1:]}")
    ya, yb = rgb_to_y(a), rgb_to_y(b)
    s = args.shave
    p = psnr(ya, yb, shave=s)
    ss = ssim(ya[s:-s, s:-s] if s else ya, yb[s:-s, s:-s] if s else yb)
    print(f"PSNR={p:.2f} SSIM={ss:.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    modules = args.module or list(gradcheck.DEFAULT_MODULES)
    results = gradcheck.run_suite(modules, seeds=range(args.seeds))
    bad = False
    for name, worst in results.items():
        ok = worst < gradcheck.TOLERANCE
        bad = bad or not ok
        print(f"{name}: worst rel err {worst:.3e} {'ok' if ok else 'FAIL'}")
    return 1 if bad else 0


def _cmd_params(args) -> int:
    cfg = ModelConfig(scale=args.scale)
    model = build_model(cfg, seed=0)
    macs = count_multi_adds(cfg, args.out_h, args.out_w)
    print(f"scale x{cfg.scale}: {model.param_count()} params, "
          f"{macs / 1e9:.1f}G multi-adds at {args.out_w}x{args.out_h}")
    return 0


_ABLATIONS = ("mask", "gumbel", "kv", "cross", "updown")


def _cmd_ablate(args) -> int:
    overrides = {}
    if args.flag == "mask":
        overrides["mask_enabled"] = args.on
    elif args.flag == "gumbel":
        overrides["mask_mode"] = args.mode if args.on else "softmax"
    elif args.flag == "kv":
        overrides["kv_pass"] = args.on
    elif args.flag == "cross":
        overrides["cross_k"] = args.on
    elif args.flag == "updown":
        overrides["updown"] = args.on
    cfg = ModelConfig.toy(**overrides)
    model = build_model(cfg, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    x = Tensor(rng.uniform(0, 1, size=(2, 3, 12, 12)).astype(cfg.dtype), requires_grad=True)
    out = model(x, mode="train", rng=rng)
    loss = out.sum()
    loss.backward()
    finite = all(p.grad is not None and np.isfinite(p.grad).all() for p in model.params())
    state = "on" if args.on else "off"
    if args.flag == "gumbel":
        state = cfg.mask_mode
    print(f"ablate {args.flag}={state}: {model.param_count()} params, "
          f"forward/backward finite: {finite}")
    return 0 if finite else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cfin",
                                description="Lightweight super-resolution toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init", help="create a freshly initialized weight archive")
    sp.add_argument("--scale", type=int, default=4, choices=(2, 3, 4))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_init)

    sp = sub.add_parser("infer", help="upscale a PNG with a weight archive")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_infer)

    sp = sub.add_parser("train-toy", help="run the desk-scale training experiment")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--history", default=None, help="write a (step, lr, loss) CSV here")
    sp.add_argument("--checkpoint", default=None, help="write the trained weights here")
    sp.set_defaults(fn=_cmd_train_toy)

    sp = sub.add_parser("metrics", help="PSNR/SSIM of two PNGs on the luma channel")
    sp.add_argument("--sr", required=True)
    sp.add_argument("--hr", required=True)
    sp.add_argument("--shave", type=int, default=0)
    sp.set_defaults(fn=_cmd_metrics)

    sp = sub.add_parser("gradcheck", help="verify backward against finite differences")
    sp.add_argument("--module", action="append", choices=sorted(gradcheck.SUITES),
                    help="restrict to one module (repeatable)")
    sp.add_argument("--seeds", type=int, default=5)
    sp.set_defaults(fn=_cmd_gradcheck)

    sp = sub.add_parser("params", help="parameter and multi-add budget of a config")
    sp.add_argument("--scale", type=int, default=4, choices=(2, 3, 4))
    sp.add_argument("--out-h", type=int, default=1280)
    sp.add_argument("--out-w", type=int, default=720)
    sp.set_defaults(fn=_cmd_params)

    sp = sub.add_parser("ablate", help="build and exercise an ablated configuration")
    sp.add_argument("--flag", required=True, choices=_ABLATIONS)
    onoff = sp.add_mutually_exclusive_group(required=True)
    onoff.add_argument("--on", action="store_true")
    onoff.add_argument("--off", dest="on", action="store_false")
    sp.add_argument("--mode", default="gumbel", choices=("gumbel", "softmax", "maxpool"),
                    help="mask selection function when --flag gumbel --on")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=_cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        return _fail("not-found", str(e))
    except archive.ArchiveError as e:
        return _fail("archive", str(e))
    except (ValueError, RuntimeError, FloatingPointError) as e:
        return _fail("invalid", str(e))


if __name__ == "__main__":
    sys.exit(main())
