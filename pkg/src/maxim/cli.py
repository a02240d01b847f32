"""Command-line interface: ``maxim <command> [flags]``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import checkpoint, config, gradsuite
from .cost import count_model
from .imageio import load_image, save_image
from .mixers import KINDS
from .multistage import ModelConfig, preset

ARCHES = ("maxim-1s", "maxim-2s", "maxim-3s", "tiny")


def _read_digest(path: str) -> bytes:
    with open(path, "rb") as f:
        head = f.read(40)
    if len(head) < 40 or head[:4] != checkpoint.MAGIC:
        raise checkpoint.CheckpointError(f"{path} is not a checkpoint")
    return head[8:40]


def resolve_model(ckpt: str, config_path: str | None) -> ModelConfig:
    """The model configuration a checkpoint was written for.

    A training config file settles it directly; otherwise the stored digest
    is matched against every named preset and mixer.
    """
    digest = _read_digest(ckpt)
    if config_path:
        cfg = config.load(config_path).model
        if cfg.digest() != digest:
            raise checkpoint.CheckpointError(f"{ckpt} was not written for the model in {config_path}")
        return cfg
    for arch in ARCHES:
        for mixer in KINDS:
            cfg = preset(arch, mixer)
            if cfg.digest() == digest:
                return cfg
    raise checkpoint.CheckpointError(f"{ckpt} matches no named preset; pass --config with its training config")


def _load_model(args):
    from .train import build_model

    cfg = resolve_model(args.ckpt, args.config)
    model, params = build_model(cfg)
    checkpoint.load(args.ckpt, params, cfg.digest())
    return model


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    from .train import train

    cfg = config.load(args.config)
    out_dir = Path(args.out or cfg.out_dir)
    result = train(cfg, log=sys.stdout, out_dir=out_dir)
    print(f"trained {cfg.steps} steps in {result.seconds:.1f}s; checkpoint {out_dir / 'final.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    from .data import load_pairs
    from .train import evaluate

    model = _load_model(args)
    result = evaluate(model, load_pairs(args.dir), y_only=args.y_only)
    print(f"psnr={result.psnr:.4f} ssim={result.ssim:.4f} images={result.count}")
    return 0


def cmd_infer(args) -> int:
    from .train import pad_infer

    model = _load_model(args)
    img = load_image(args.inp)
    save_image(pad_infer(img.data[0], model, mode=args.pad_mode), args.out)
    return 0


def cmd_count(args) -> int:
    report = count_model(preset(args.arch, args.mixer), args.hw, args.hw)
    print(report.to_csv() if args.csv else report.to_text(), end="" if args.csv else "\n")
    return 0


def cmd_gradcheck(args) -> int:
    ok = True
    for outcome in gradsuite.run(args.block):
        print(outcome.line(), flush=True)
        ok &= outcome.passed
    print("all gradient checks passed" if ok else "gradient checks FAILED")
    return 0 if ok else 1


def scaling_table(arch: str, mixer: str, sizes=(64, 128, 256, 512)) -> list[tuple[int, int]]:
    cfg = preset(arch, mixer)
    return [(s, count_model(cfg, s, s).flops) for s in sizes]


def cmd_bench(args) -> int:
    if not args.scaling:
        print("bench: nothing to do (use --scaling)", file=sys.stderr)
        return 2
    rows = scaling_table(args.arch, args.mixer)
    print(f"{'H=W':>6}  {'FLOPs (MAC=2)':>18}  {'ratio':>12}  {'excess over 4x':>15}")
    prev = None
    for size, flops in rows:
        if prev is None:
            print(f"{size:>6}  {flops:>18,}  {'':>12}  {'':>15}")
        else:
            print(f"{size:>6}  {flops:>18,}  {flops / prev:>12.9f}  {flops - 4 * prev:>15,}")
        prev = flops
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxim", description="Multi-axis MLP image restoration on numpy.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("train", help="train from a key = value config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="checkpoint directory (default: out_dir from the config)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="mean PSNR/SSIM over a directory of input/ and target/ pairs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--y-only", action="store_true", help="score the BT.601 luma channel only")
    p.add_argument("--config", help="training config, needed for checkpoints of custom models")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="restore one image of any size")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pad-mode", choices=("reflect", "edge"), default="reflect")
    p.add_argument("--config", help="training config, needed for checkpoints of custom models")
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("count", help="parameter and FLOP table")
    p.add_argument("--arch", choices=ARCHES, required=True)
    p.add_argument("--hw", type=int, default=256, help="square input extent (default 256)")
    p.add_argument("--mixer", choices=KINDS, default="gmlp")
    p.add_argument("--csv", action="store_true", help="comma-separated output")
    p.set_defaults(fn=cmd_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--block", choices=sorted(gradsuite.SUITES), help="run one suite only")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("bench", help="FLOPs scaling with input size")
    p.add_argument("--scaling", action="store_true")
    p.add_argument("--arch", choices=ARCHES, default="maxim-1s")
    p.add_argument("--mixer", choices=KINDS, default="gmlp")
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 1
    except Exception as e:  # runtime failures become exit status 1
        print(f"maxim {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
