"""Parameter and FLOP totals for every preset and mixer, plus the height-scaling check."""

from maxim.cost import count_model
from maxim.mixers import KINDS
from maxim.multistage import preset


def main(size: int = 256) -> None:
    print(f"{'arch':<10}{'mixer':<7}{'params':>10}{'GFLOPs MAC=2':>15}{'GFLOPs MAC=1':>15}")
    for arch in ("maxim-1s", "maxim-2s", "maxim-3s"):
        for mixer in KINDS:
            rep = count_model(preset(arch, mixer), size, size)
            print(f"{arch:<10}{mixer:<7}{rep.params / 1e6:>9.2f}M{rep.flops / 1e9:>15.1f}{rep.flops_mac1 / 1e9:>15.1f}")
    base = count_model(preset("maxim-1s"), size, size).flops
    tall = count_model(preset("maxim-1s"), 2 * size, size).flops
    print(f"\ndoubling the height: FLOPs x{tall / base:.9f} (excess over 2x: {tall - 2 * base:+,})")


if __name__ == "__main__":
    main()
