"""Block and grid partitioning of ``(N, H, W, C)`` feature maps.

Both partitions produce a ``(N, groups, group_size, C)`` tensor:

* ``block(x, b)`` tiles the image into non-overlapping ``b x b`` windows.
  Pixel ``(h, w)`` lands in group ``(h // b) * (W // b) + w // b`` at
  position ``(h % b) * b + w % b``. Mixing along the *within* axis is local.
* ``grid(x, d)`` factors ``h = gi * (H // d) + pi`` (and likewise ``w``): the
  grid coordinate ``gi * d + gj`` indexes axis 1 and the offset
  ``pi * (W // d) + pj`` indexes axis 2. Mixing along the *group* axis touches
  pixels ``H // d`` apart, a dilated global lattice.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .autodiff import Tensor, ops

BLOCK = "block"
GRID = "grid"
# grid coordinate is the coarse factor of each spatial index
GRID_COORD_IS_COARSE = True

AXES = {"group": 1, "within": 2}


@dataclass(frozen=True)
class PartitionView:
    kind: str
    window: int
    height: int
    width: int
    tensor: Tensor

    @property
    def factors(self) -> tuple[int, int, int, int]:
        """(groups along H, groups along W, window H, window W)."""
        if self.kind == BLOCK:
            b = self.window
            return self.height // b, self.width // b, b, b
        d = self.window
        return d, d, self.height // d, self.width // d

    @property
    def num_groups(self) -> int:
        gh, gw, _, _ = self.factors
        return gh * gw

    @property
    def group_size(self) -> int:
        _, _, fh, fw = self.factors
        return fh * fw


def _partition(x: Tensor, gh: int, fh: int, gw: int, fw: int) -> Tensor:
    n, _, _, c = x.shape
    t = ops.reshape(x, (n, gh, fh, gw, fw, c))
    t = ops.transpose(t, (0, 1, 3, 2, 4, 5))
    return ops.reshape(t, (n, gh * gw, fh * fw, c))


def _check(x: Tensor, size: int, what: str) -> tuple[int, int]:
    if x.ndim != 4:
        raise ValueError(f"expected (N, H, W, C), got {x.shape}")
    _, h, w, _ = x.shape
    if size < 1 or h % size or w % size:
        raise ValueError(f"{what}={size} must divide both spatial extents {(h, w)}")
    return h, w


def block(x: Tensor, b: int) -> PartitionView:
    h, w = _check(x, b, "block size")
    return PartitionView(BLOCK, b, h, w, _partition(x, h // b, b, w // b, b))


def grid(x: Tensor, d: int) -> PartitionView:
    h, w = _check(x, d, "grid size")
    return PartitionView(GRID, d, h, w, _partition(x, d, h // d, d, w // d))


def invert(v: PartitionView) -> Tensor:
    gh, gw, fh, fw = v.factors
    n, groups, size, c = v.tensor.shape
    if groups != gh * gw or size != fh * fw:
        raise ValueError(f"view tensor {v.tensor.shape} does not match source extents {(v.height, v.width)}")
    t = ops.reshape(v.tensor, (n, gh, gw, fh, fw, c))
    t = ops.transpose(t, (0, 1, 3, 2, 4, 5))
    return ops.reshape(t, (n, v.height, v.width, c))


def mix_on_axis(v: PartitionView, mixer: Callable[..., Tensor], axis: str) -> PartitionView:
    """Apply a 1-D ``mixer(tensor, axis=k)`` along the group or within axis.

    The mixer is shared across every index of the other axes, so its
    parameters do not depend on the image extents.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be 'group' or 'within', got {axis!r}")
    k = AXES[axis]
    length = getattr(mixer, "length", None)
    if length is not None and length != v.tensor.shape[k]:
        raise ValueError(f"mixer length {length} != {axis} extent {v.tensor.shape[k]}")
    out = mixer(v.tensor, axis=k)
    if out.shape != v.tensor.shape:
        raise ValueError("mixer must preserve the view shape")
    return PartitionView(v.kind, v.window, v.height, v.width, out)
