"""Single-stage encoder/decoder with gated skips and multi-scale heads.

Depth ``n`` runs at ``1 / 2**n`` of the input resolution with ``c0 * 2**n``
channels. The two bottleneck blocks run at ``1 / 2**depth`` resolution.
Skip connections pass through cross-gating blocks driven by the bottleneck's
global features, which are refined and handed upward depth by depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .autodiff import Tensor, ops
from .blocks import CrossGatingBlock, MultiAxisBlock, ResidualChannelAttention, SupervisedAttention
from .nn import Conv2d, Dense, Module, zeros


@dataclass(frozen=True)
class StageConfig:
    c0: int = 32
    depth: int = 3
    block_sizes: tuple[int, ...] = (16, 16, 8)
    grid_sizes: tuple[int, ...] = (16, 16, 8)
    bottleneck_sizes: tuple[tuple[int, int], ...] = ((8, 8), (8, 8))
    bottleneck_mult: int = 4
    groups: int = 2
    mixer: str = "gmlp"
    reduction: int = 4
    slope: float = 0.2
    in_factor: int = 2
    expansion: int = 2
    # supervised-attention handoff at every supervised scale, or full resolution only
    sam_all_scales: bool = True

    def __post_init__(self):
        if len(self.block_sizes) != self.depth or len(self.grid_sizes) != self.depth:
            raise ValueError("need one block size and one grid size per depth")
        if self.c0 < 1 or self.depth < 1:
            raise ValueError("c0 and depth must be positive")

    def width(self, n: int) -> int:
        return self.c0 * 2**n

    @property
    def bottleneck_width(self) -> int:
        return self.c0 * self.bottleneck_mult

    @property
    def widths(self) -> list[int]:
        return [self.width(n) for n in range(self.depth)]

    def divisor(self) -> int:
        """Smallest positive integer every valid input extent must be a multiple of."""
        req = [2**n * s for n in range(self.depth) for s in (self.block_sizes[n], self.grid_sizes[n])]
        req += [2**self.depth * s for pair in self.bottleneck_sizes for s in pair]
        return math.lcm(*req)


DEFAULT = StageConfig()
TINY = StageConfig(c0=8, block_sizes=(8, 8, 4), grid_sizes=(8, 8, 4), bottleneck_sizes=((4, 4), (4, 4)))


@dataclass
class StageResult:
    outputs: list[Tensor]
    encoder: list[Tensor]
    decoder: list[Tensor]
    sam_features: list[Tensor] | None = None


@dataclass
class CrossStage:
    """What a stage hands to the next one."""

    encoder: list[Tensor]
    decoder: list[Tensor]
    sam_features: list[Tensor]


class MixingGroups(Module):
    """``groups`` x (multi-axis block, channel attention block) with a long skip."""

    def __init__(self, cfg: StageConfig, channels: int, block_size: int, grid_size: int, kernel: int = 3):
        super().__init__()
        self.groups = cfg.groups
        for g in range(cfg.groups):
            setattr(
                self,
                f"mab{g}",
                MultiAxisBlock(channels, block_size, grid_size, cfg.mixer, cfg.in_factor, cfg.expansion),
            )
            setattr(self, f"rcab{g}", ResidualChannelAttention(channels, kernel, cfg.reduction, cfg.slope))

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for g in range(self.groups):
            h = getattr(self, f"rcab{g}")(getattr(self, f"mab{g}")(h))
        return ops.add(h, x)


class EncoderLevel(Module):
    def __init__(self, cfg: StageConfig, n: int, has_shallow: bool, cross_stage: bool):
        super().__init__()
        c = cfg.width(n)
        cin = (c if has_shallow else 0) + (cfg.width(n - 1) if n > 0 else 0)
        self.fuse = Conv2d(cin, c, 1)
        self.cross = None
        if cross_stage:
            self.cross = CrossGatingBlock(c, c, c, cfg.block_sizes[n], cfg.grid_sizes[n], both_outputs=False)
        self.body = MixingGroups(cfg, c, cfg.block_sizes[n], cfg.grid_sizes[n])
        self.down = Conv2d(c, c, 3, stride=2)

    def forward(self, running: Tensor | None, shallow: Tensor | None, incoming: Tensor | None):
        parts = [t for t in (running, shallow) if t is not None]
        h = self.fuse(parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1))
        if self.cross is not None:
            h, _ = self.cross(h, incoming)
        h = self.body(h)
        return h, self.down(h)


class Bottleneck(Module):
    def __init__(self, cfg: StageConfig, cin: int, block_size: int, grid_size: int):
        super().__init__()
        self.proj = Conv2d(cin, cfg.bottleneck_width, 1)
        self.body = MixingGroups(cfg, cfg.bottleneck_width, block_size, grid_size, kernel=1)

    def forward(self, x: Tensor) -> Tensor:
        return self.body(self.proj(x))


class ScaleFusion(Module):
    """Resize every source map to the target extent, project to ``cout`` and sum."""

    def __init__(self, widths: list[int], cout: int):
        super().__init__()
        self.count = len(widths)
        for j, c in enumerate(widths):
            setattr(self, f"proj{j}", Dense(c, cout))

    def forward(self, sources: list[Tensor], size: tuple[int, int]) -> Tensor:
        total = None
        for j, src in enumerate(sources):
            if src.shape[1:3] != size:
                src = ops.resize(src, size, "bilinear")
            term = getattr(self, f"proj{j}")(src)
            total = term if total is None else ops.add(total, term)
        return total


class SkipGate(Module):
    """Gated skip at depth ``n``: multi-scale encoder features crossed with global features.

    ``below`` arrives at half this depth's resolution and is upsampled first.
    The shallowest gate has no consumer for its refined global output, so it
    is built one-sided.
    """

    def __init__(self, cfg: StageConfig, n: int, below_width: int):
        super().__init__()
        c = cfg.width(n)
        self.n = n
        self.fusion = ScaleFusion(cfg.widths, c)
        self.gate = CrossGatingBlock(c, below_width, c, cfg.block_sizes[n], cfg.grid_sizes[n], both_outputs=n > 0)

    def forward(self, encoder: list[Tensor], below: Tensor) -> tuple[Tensor, Tensor | None]:
        x = self.fusion(encoder, encoder[self.n].shape[1:3])
        return self.gate(x, ops.upsample_nearest(below, 2))


class DecoderLevel(Module):
    def __init__(self, cfg: StageConfig, n: int, below_width: int):
        super().__init__()
        c = cfg.width(n)
        self.up = Dense(below_width, c)
        self.fusion = ScaleFusion(cfg.widths, c)
        self.fuse = Conv2d(2 * c, c, 1)
        self.body = MixingGroups(cfg, c, cfg.block_sizes[n], cfg.grid_sizes[n])

    def forward(self, below: Tensor, skips: list[Tensor]) -> Tensor:
        up = self.up(ops.upsample_nearest(below, 2))
        fused = self.fusion(skips, up.shape[1:3])
        return self.body(self.fuse(ops.concat([up, fused], axis=-1)))


class Stage(Module):
    """One encoder/decoder pass emitting a restored image per pyramid scale.

    Non-first stages take a :class:`CrossStage` bundle from their predecessor.
    Non-last stages produce their full-resolution output through a supervised
    attention module, whose features feed the next stage.
    """

    def __init__(self, cfg: StageConfig, scales: int = 3, first: bool = True, last: bool = True):
        super().__init__()
        if not 1 <= scales <= cfg.depth:
            raise ValueError(f"scales must be in [1, {cfg.depth}]")
        self.cfg, self.scales, self.first, self.last = cfg, scales, first, last
        depth = cfg.depth
        for n in range(scales):
            setattr(self, f"shallow{n}", Conv2d(3, cfg.width(n), 3))
        self.handoff = scales if cfg.sam_all_scales else 1
        if not first:
            for n in range(self.handoff):
                c = cfg.width(n)
                gate = CrossGatingBlock(c, c, c, cfg.block_sizes[n], cfg.grid_sizes[n], both_outputs=False)
                setattr(self, f"sam_fuse{n}", gate)
        for n in range(depth):
            setattr(self, f"enc{n}", EncoderLevel(cfg, n, n < scales, not first))
        cin = cfg.width(depth - 1)
        for i, (b, d) in enumerate(cfg.bottleneck_sizes):
            setattr(self, f"neck{i}", Bottleneck(cfg, cin, b, d))
            cin = cfg.bottleneck_width
        for n in range(depth):
            below = cfg.bottleneck_width if n == depth - 1 else cfg.width(n + 1)
            setattr(self, f"gate{n}", SkipGate(cfg, n, below))
            setattr(self, f"dec{n}", DecoderLevel(cfg, n, below))
        for n in range(scales):
            if n < self.handoff and not last:
                setattr(self, f"sam{n}", SupervisedAttention(cfg.width(n)))
            else:
                # zero kernel: an untrained stage returns its input image unchanged
                setattr(self, f"head{n}", Conv2d(cfg.width(n), 3, 3, init=zeros))

    def forward(self, pyramid: list[Tensor], incoming: CrossStage | None = None) -> StageResult:
        cfg = self.cfg
        if len(pyramid) < self.scales:
            raise ValueError(f"need {self.scales} pyramid scales, got {len(pyramid)}")
        if (incoming is None) != self.first:
            raise ValueError("exactly the non-first stages take cross-stage features")
        for n in range(1, self.scales):
            want = tuple(-(-s // 2**n) for s in pyramid[0].shape[1:3])
            if pyramid[n].shape[1:3] != want:
                raise ValueError(f"pyramid scale {n} has extents {pyramid[n].shape[1:3]}, expected {want}")

        encoder, running = [], None
        for n in range(cfg.depth):
            shallow = getattr(self, f"shallow{n}")(pyramid[n]) if n < self.scales else None
            cross = None
            if incoming is not None:
                if n < self.handoff:
                    shallow, _ = getattr(self, f"sam_fuse{n}")(shallow, incoming.sam_features[n])
                cross = ops.add(incoming.encoder[n], incoming.decoder[n])
            feat, running = getattr(self, f"enc{n}")(running, shallow, cross)
            encoder.append(feat)

        h = running
        for i in range(len(cfg.bottleneck_sizes)):
            h = getattr(self, f"neck{i}")(h)

        skips: list[Tensor] = [None] * cfg.depth
        below = h
        for n in reversed(range(cfg.depth)):
            skips[n], below = getattr(self, f"gate{n}")(encoder, below)

        decoder: list[Tensor] = [None] * cfg.depth
        below = h
        for n in reversed(range(cfg.depth)):
            below = decoder[n] = getattr(self, f"dec{n}")(below, skips)

        outputs, sam_features = [], None if self.last else []
        for n in range(self.scales):
            if n < self.handoff and not self.last:
                feat, restored = getattr(self, f"sam{n}")(decoder[n], pyramid[n])
                sam_features.append(feat)
            else:
                restored = ops.add(getattr(self, f"head{n}")(decoder[n]), pyramid[n])
            outputs.append(restored)
        return StageResult(outputs, encoder, decoder, sam_features)
