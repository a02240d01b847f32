"""Train the desk-scale model on synthetic noise and save a before/after strip.

    python demos/denoise_tiny.py --steps 300 --out strip.ppm
"""

import argparse

import numpy as np

from maxim import config
from maxim.imageio import save_image
from maxim.train import evaluate, held_out_pairs, pad_infer, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--sigma", type=float, default=25.0)
    parser.add_argument("--out", default="denoise_strip.ppm")
    args = parser.parse_args()

    cfg = config.parse(f"profile = tiny\nsteps = {args.steps}\nsigma = {args.sigma}\nlog_every = 50\n")
    result = train(cfg)
    print(f"{args.steps} steps in {result.seconds:.0f}s")

    pairs = held_out_pairs(cfg, count=4)
    print(evaluate(result.model, pairs).line())
    noisy, clean = pairs[0]
    restored = pad_infer(noisy, result.model)
    save_image(np.concatenate([noisy, restored, clean], axis=1), args.out)
    print(f"noisy | restored | clean written to {args.out}")


if __name__ == "__main__":
    main()
