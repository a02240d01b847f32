"""Stacked stages, multi-scale supervision and the training loss."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from .autodiff import Tensor, ops
from .backbone import DEFAULT, TINY, CrossStage, Stage, StageConfig
from .nn import Module

CHARBONNIER_EPS = 1e-3


@dataclass(frozen=True)
class ModelConfig:
    stages: int = 1
    scales: int = 3
    stage: StageConfig = field(default_factory=StageConfig)
    freq_weight: float = 0.1
    loss: str = "charbonnier"

    def __post_init__(self):
        if self.stages < 1 or self.scales < 1:
            raise ValueError("stages and scales must be at least 1")
        if self.freq_weight < 0:
            raise ValueError("frequency-loss weight must be non-negative")
        if self.loss not in ("charbonnier", "l2"):
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def divisor(self) -> int:
        return self.stage.divisor()

    def digest(self) -> bytes:
        """SHA-256 of the canonical JSON form; identifies a parameter layout."""
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).digest()


def preset(name: str, mixer: str = "gmlp") -> ModelConfig:
    """``maxim-1s`` / ``maxim-2s`` / ``maxim-3s`` (full size) or ``tiny``."""
    name = name.lower()
    if name == "tiny":
        return ModelConfig(stages=1, stage=replace(TINY, mixer=mixer))
    stages = {"maxim-1s": 1, "maxim-2s": 2, "maxim-3s": 3}.get(name)
    if stages is None:
        raise ValueError(f"unknown architecture {name!r}")
    return ModelConfig(stages=stages, stage=replace(DEFAULT, mixer=mixer))


@dataclass
class StageOutputs:
    restored: list[list[Tensor]]
    sam_features: list[Tensor | None]

    @property
    def final(self) -> Tensor:
        return self.restored[-1][0]


def image_pyramid(img: Tensor, scales: int) -> list[Tensor]:
    """Full-resolution input followed by nearest-neighbour halvings."""
    h, w = img.shape[1:3]
    return [img] + [ops.resize(img, (h // 2**n, w // 2**n), "nearest") for n in range(1, scales)]


def target_pyramid(target: Tensor, scales: int) -> list[Tensor]:
    h, w = target.shape[1:3]
    return [target] + [ops.resize(target, (h // 2**n, w // 2**n), "bilinear") for n in range(1, scales)]


class Restorer(Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        for s in range(cfg.stages):
            setattr(self, f"stage{s}", Stage(cfg.stage, cfg.scales, first=s == 0, last=s == cfg.stages - 1))

    def forward(self, img: Tensor) -> StageOutputs:
        if img.ndim != 4 or img.shape[-1] != 3:
            raise ValueError(f"expected an (N, H, W, 3) image batch, got {img.shape}")
        div = self.cfg.divisor
        if img.shape[1] % div or img.shape[2] % div:
            raise ValueError(f"extents {img.shape[1:3]} must be multiples of {div}; pad the input first")
        pyramid = image_pyramid(img, self.cfg.scales)
        restored, sam, incoming = [], [], None
        for s in range(self.cfg.stages):
            result = getattr(self, f"stage{s}")(pyramid, incoming)
            restored.append(result.outputs)
            sam.append(result.sam_features)
            if result.sam_features is not None:
                incoming = CrossStage(result.encoder, result.decoder, result.sam_features)
        return StageOutputs(restored, sam)


def charbonnier(pred: Tensor, target: Tensor, eps: float = CHARBONNIER_EPS) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return ops.mean(ops.sqrt(ops.add(ops.square(ops.sub(pred, target)), eps * eps)))


def freq_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return ops.rfft2_l1diff(pred, target)


def mse(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return ops.mean(ops.square(ops.sub(pred, target)))


def total_loss(out: StageOutputs, target: Tensor, cfg: ModelConfig) -> Tensor:
    """Sum over stages and scales of the per-output reconstruction loss."""
    if out.restored[0][0].shape != target.shape:
        raise ValueError(f"target {target.shape} does not match output {out.restored[0][0].shape}")
    targets = target_pyramid(target, len(out.restored[0]))
    total = None
    for outputs in out.restored:
        for pred, t in zip(outputs, targets):
            if cfg.loss == "l2":
                term = mse(pred, t)
            else:
                term = charbonnier(pred, t)
                if cfg.freq_weight:
                    term = ops.add(term, ops.mul(freq_loss(pred, t), cfg.freq_weight))
            total = term if total is None else ops.add(total, term)
    return total
