"""Building blocks of the restoration backbone.

* :class:`MultiAxisBlock` mixes a local ``b x b`` window branch and a dilated
  ``d x d`` grid branch in parallel, each with a 1-D token mixer.
* :class:`CrossGatingBlock` gates each of two feature maps by multi-axis
  weights extracted from the other.
* :class:`ResidualChannelAttention` is LayerNorm, conv, LeakyReLU, conv and a
  squeeze-excite gate around a residual add.
* :class:`SupervisedAttention` turns stage features into a restored image and
  attention-weighted features for the next stage.
"""

from __future__ import annotations

from .autodiff import Tensor, ops
from .mixers import make_mixer
from .nn import Conv2d, Dense, LayerNorm, Module, SpatialProjection, zeros
from .partition import block, grid, invert, mix_on_axis


class MultiAxisBlock(Module):
    """Local and global token mixing over two channel halves, with a long skip.

    ``in_factor`` widens the input projection: each branch mixes
    ``in_factor * channels / 2`` channels.
    """

    def __init__(
        self,
        channels: int,
        block_size: int,
        grid_size: int,
        mixer: str = "gmlp",
        in_factor: int = 2,
        expansion: int = 2,
    ):
        super().__init__()
        width = in_factor * channels
        if width % 2:
            raise ValueError(f"projected width {width} must be even to split into branches")
        self.block_size, self.grid_size = block_size, grid_size
        branch = width // 2
        self.norm = LayerNorm(channels)
        self.proj_in = Dense(channels, width)
        self.local = make_mixer(mixer, branch, block_size * block_size, expansion=expansion)
        self.globl = make_mixer(mixer, branch, grid_size * grid_size, expansion=expansion)
        self.proj_out = Dense(width, channels)

    def forward(self, x: Tensor) -> Tensor:
        u_loc, u_glob = (ops.gelu(u) for u in self.proj_in(self.norm(x), parts=2))
        loc = invert(mix_on_axis(block(u_loc, self.block_size), self.local, "within"))
        glob = invert(mix_on_axis(grid(u_glob, self.grid_size), self.globl, "group"))
        return ops.add(x, self.proj_out(ops.concat([loc, glob], axis=-1)))


def mab_flops(height: int, width: int, channels: int, block_size: int, grid_size: int) -> int:
    """Closed-form cost ``b^2 HWC + d^2 HWC + 10 HWC^2`` of one multi-axis block."""
    hwc = height * width * channels
    return block_size**2 * hwc + grid_size**2 * hwc + 10 * hwc * channels


class GatingExtractor(Module):
    """Multi-axis gating weights: block and grid spatial projections on two halves."""

    def __init__(self, channels: int, block_size: int, grid_size: int, factor: int = 2):
        super().__init__()
        width = factor * channels
        self.block_size, self.grid_size = block_size, grid_size
        self.norm = LayerNorm(channels)
        self.proj_in = Dense(channels, width)
        self.local = SpatialProjection(block_size * block_size)
        self.globl = SpatialProjection(grid_size * grid_size)
        self.proj_out = Dense(width, channels)

    def forward(self, x: Tensor) -> Tensor:
        z1, z2 = (ops.gelu(z) for z in self.proj_in(self.norm(x), parts=2))
        loc = invert(mix_on_axis(block(z1, self.block_size), self.local, "within"))
        glob = invert(mix_on_axis(grid(z2, self.grid_size), self.globl, "group"))
        return self.proj_out(ops.concat([loc, glob], axis=-1))


class CrossGatingBlock(Module):
    """Two-input block; each branch is gated by weights computed from the other.

    Returns ``(x3, y3)``, both with ``channels`` channels; ``y3`` is ``None``
    for a one-sided block.
    """

    def __init__(
        self,
        x_channels: int,
        y_channels: int,
        channels: int,
        block_size: int,
        grid_size: int,
        both_outputs: bool = True,
    ):
        super().__init__()
        self.both_outputs = both_outputs
        self.proj_x = Dense(x_channels, channels)
        self.proj_y = Dense(y_channels, channels)
        self.norm_x = LayerNorm(channels)
        self.norm_y = LayerNorm(channels)
        self.in_x = Dense(channels, channels)
        self.in_y = Dense(channels, channels)
        # one-sided: y3 is never consumed, so its gate and output projection are omitted
        if both_outputs:
            self.gate_x = GatingExtractor(channels, block_size, grid_size)
        self.gate_y = GatingExtractor(channels, block_size, grid_size)
        self.out_x = Dense(channels, channels)
        if both_outputs:
            self.out_y = Dense(channels, channels)

    def forward(self, x: Tensor, y: Tensor) -> tuple[Tensor, Tensor | None]:
        if x.shape[:3] != y.shape[:3]:
            raise ValueError(f"cross gating needs matching (N, H, W): {x.shape} vs {y.shape}")
        x1, y1 = self.proj_x(x), self.proj_y(y)
        x2 = ops.gelu(self.in_x(self.norm_x(x1)))
        y2 = ops.gelu(self.in_y(self.norm_y(y1)))
        x3 = ops.add(x1, self.out_x(ops.mul(x2, self.gate_y(y2))))
        if not self.both_outputs:
            return x3, None
        y3 = ops.add(y1, self.out_y(ops.mul(y2, self.gate_x(x2))))
        return x3, y3


class SqueezeExcite(Module):
    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        if channels % reduction:
            raise ValueError(f"reduction {reduction} must divide channels {channels}")
        self.squeeze = Dense(channels, channels // reduction)
        self.excite = Dense(channels // reduction, channels)

    def forward(self, x: Tensor) -> Tensor:
        pooled = ops.mean(x, axis=(1, 2), keepdims=True)
        gate = ops.sigmoid(self.excite(ops.gelu(self.squeeze(pooled))))
        return ops.mul(x, gate)


class ResidualChannelAttention(Module):
    def __init__(self, channels: int, kernel: int = 3, reduction: int = 4, slope: float = 0.2):
        super().__init__()
        self.slope = slope
        self.norm = LayerNorm(channels)
        self.conv1 = Conv2d(channels, channels, kernel)
        self.conv2 = Conv2d(channels, channels, kernel)
        self.se = SqueezeExcite(channels, reduction)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(self.conv1(self.norm(x)), self.slope)
        return ops.add(x, self.se(self.conv2(h)))


class SupervisedAttention(Module):
    """Returns ``(features, restored)`` where ``restored`` is supervised."""

    def __init__(self, channels: int, image_channels: int = 3):
        super().__init__()
        self.conv_feat = Conv2d(channels, channels, 3)
        self.conv_img = Conv2d(channels, image_channels, 3, init=zeros)
        self.conv_att = Conv2d(image_channels, channels, 3)

    def forward(self, f: Tensor, img: Tensor) -> tuple[Tensor, Tensor]:
        if f.shape[:3] != img.shape[:3]:
            raise ValueError(f"features {f.shape} and image {img.shape} differ spatially")
        restored = ops.add(self.conv_img(f), img)
        attn = ops.sigmoid(self.conv_att(restored))
        features = ops.add(ops.mul(self.conv_feat(f), attn), f)
        return features, restored
