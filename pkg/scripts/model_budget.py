"""Print parameter counts and multi-adds for the standard presets.

Usage:
    python3 scripts/model_budget.py [--out-h 1280] [--out-w 720]
"""

import argparse

from cfin import ModelConfig, build_model, count_multi_adds


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-h", type=int, default=1280)
    ap.add_argument("--out-w", type=int, default=720)
    args = ap.parse_args()

    print(f"{'scale':>5} {'params':>10} {'multi-adds @ %dx%d' % (args.out_h, args.out_w):>22}")
    for scale in (2, 3, 4):
        cfg = ModelConfig(scale=scale)
        model = build_model(cfg, seed=0)
        n_params = sum(p.data.size for _, p in model.named_params())
        macs = count_multi_adds(cfg, args.out_h, args.out_w)
        print(f"{scale:>5} {n_params:>10,} {macs / 1e9:>20.2f} G")


if __name__ == "__main__":
    main()
