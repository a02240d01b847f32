"""Print where each pixel of a small image lands in the block and grid views."""

import numpy as np

from maxim.autodiff import Tensor
from maxim.partition import block, grid


def show(title: str, arr: np.ndarray) -> None:
    print(title)
    for row in arr:
        print("  " + " ".join(f"{int(v):2d}" for v in row))


def main() -> None:
    h, w = 4, 6
    img = Tensor(np.arange(h * w, dtype=np.float64).reshape(1, h, w, 1))
    show(f"image ({h}x{w}), value = pixel index", img.data[0, :, :, 0])
    # rows are groups, columns are positions inside a group
    show("block(x, 2): each row is one 2x2 window", block(img, 2).tensor.data[0, :, :, 0])
    show("grid(x, 2): each row holds pixels that share an offset, spread over the 2x2 grid", grid(img, 2).tensor.data[0, :, :, 0].T)


if __name__ == "__main__":
    main()
