"""Train the toy preset on synthetic textures and compare against bicubic.

Runs the same end-to-end loop the acceptance suite uses: 64 synthetic
32x32 HR textures, x2 upscaling, Adam with a cosine schedule, held-out
Y-channel PSNR at the end. A few minutes on one core.

Usage:
    python3 scripts/toy_sr_experiment.py [--seed 0] [--steps 500] \
        [--history history.csv] [--save model.cfin]
"""

import argparse

from cfin.archive import save_model
from cfin.model import ModelConfig, build_model
from cfin.trainer import run_toy_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--history", help="write per-step loss CSV here")
    ap.add_argument("--save", help="write the trained model archive here")
    args = ap.parse_args()

    model = build_model(ModelConfig.toy(), seed=args.seed)
    result = run_toy_experiment(seed=args.seed, steps=args.steps,
                                history_path=args.history, model=model)
    print(f"smoothed L1: {result.smoothed_first:.4f} -> {result.smoothed_last:.4f} "
          f"({100 * result.loss_drop:.1f}% drop)")
    print(f"held-out Y-PSNR: model {result.psnr_model:.2f} dB, "
          f"bicubic {result.psnr_baseline:.2f} dB "
          f"({result.psnr_model - result.psnr_baseline:+.2f} dB)")

    if args.save:
        save_model(model, args.save)
        print(f"wrote {args.save}")


if __name__ == "__main__":
    main()
