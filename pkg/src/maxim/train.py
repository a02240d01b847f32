"""Training loop, evaluation and arbitrary-size inference."""

from __future__ import annotations

import math
import sys
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np

from . import checkpoint, metrics
from .autodiff import ParamStore, Tensor, backward, no_grad
from .config import TrainConfig
from .data import BatchSource, load_dir, load_pairs, synth_pair, synthetic_images
from .multistage import ModelConfig, Restorer, total_loss
from .nn import init_params
from .optim import adam_step, lr_at

PAD_MULTIPLE = 64
HELD_OUT_SEED_OFFSET = 10_000


def build_model(cfg: ModelConfig, seed: int = 0) -> tuple[Restorer, ParamStore]:
    model = Restorer(cfg)
    params = init_params(model, seed)
    model.bind(params)
    return model, params


def model_forward(model: Restorer, batch: np.ndarray) -> np.ndarray:
    """Final full-resolution output of the last stage, without recording a graph."""
    with no_grad():
        return model(Tensor(batch, dtype=np.float32)).final.data


def pad_infer(
    img,
    forward: Restorer | Callable[[np.ndarray], np.ndarray],
    multiple: int | None = None,
    mode: str = "reflect",
) -> np.ndarray:
    """Restore an image of any extent: pad symmetrically, run, crop back.

    ``img`` is ``(H, W, 3)`` or ``(N, H, W, 3)``. Padding reaches the next
    multiple of 64 (or of the model's divisor when that is coarser) and is
    split as evenly as possible between the two sides. ``mode`` is
    ``"reflect"`` or ``"edge"``.
    """
    a = np.asarray(getattr(img, "data", img), dtype=np.float32)
    single = a.ndim == 3
    if single:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"expected (H, W, C) or (N, H, W, C), got shape {a.shape}")
    if multiple is None:
        multiple = PAD_MULTIPLE
        if isinstance(forward, Restorer):
            multiple = math.lcm(PAD_MULTIPLE, forward.cfg.divisor)
    if mode not in ("reflect", "edge"):
        raise ValueError(f"unknown padding mode {mode!r}")
    h, w = a.shape[1:3]
    ph, pw = -h % multiple, -w % multiple
    top, left = ph // 2, pw // 2
    pad = ((0, 0), (top, ph - top), (left, pw - left), (0, 0))
    # numpy's reflect needs at least two samples along an axis
    np_mode = "edge" if mode == "edge" or min(h, w) < 2 else "reflect"
    padded = np.pad(a, pad, mode=np_mode) if ph or pw else a
    run = (lambda x: model_forward(forward, x)) if isinstance(forward, Restorer) else forward
    out = np.asarray(run(padded))
    if out.shape[1:3] != padded.shape[1:3]:
        raise ValueError(f"model changed the extents {padded.shape[1:3]} -> {out.shape[1:3]}")
    out = out[:, top : top + h, left : left + w]
    return out[0] if single else out


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class EvalResult:
    psnr: float
    ssim: float
    input_psnr: float
    count: int

    def line(self) -> str:
        return (
            f"images={self.count} psnr={self.psnr:.4f} ssim={self.ssim:.4f} "
            f"input_psnr={self.input_psnr:.4f} gain={self.psnr - self.input_psnr:.4f}"
        )


def evaluate(model: Restorer, pairs, y_only: bool = False) -> EvalResult:
    """Mean PSNR/SSIM of restored images against their clean references."""
    if not pairs:
        raise ValueError("no evaluation pairs")
    p_out, s_out, p_in = [], [], []
    for degraded, clean in pairs:
        restored = pad_infer(degraded, model)
        p_out.append(metrics.psnr(restored, clean, y_only=y_only))
        s_out.append(metrics.ssim(restored, clean, y_only=y_only))
        p_in.append(metrics.psnr(degraded, clean, y_only=y_only))
    return EvalResult(float(np.mean(p_out)), float(np.mean(s_out)), float(np.mean(p_in)), len(pairs))


def held_out_pairs(cfg: TrainConfig, count: int = 8) -> list[tuple[np.ndarray, np.ndarray]]:
    """Degraded/clean pairs from procedural images the training set never contains."""
    seed = cfg.seed + HELD_OUT_SEED_OFFSET
    rng = np.random.default_rng([seed, 1])
    clean = synthetic_images(count, cfg.synthetic_size, seed)
    return [synth_pair(cfg.degradation, c, cfg.degradation_params, rng) for c in clean]


# ------------------------------------------------------------------ training


def batch_source(cfg: TrainConfig) -> BatchSource:
    common = dict(patch=cfg.patch, batch=cfg.batch, seed=cfg.seed, augment_cfg=cfg.augment)
    if cfg.pairs_dir:
        return BatchSource(pairs=load_pairs(cfg.pairs_dir), **common)
    clean = load_dir(cfg.clean_dir) if cfg.clean_dir else synthetic_images(
        cfg.synthetic_images, cfg.synthetic_size, cfg.seed
    )
    return BatchSource(clean=clean, kind=cfg.degradation, params=cfg.degradation_params, **common)


def train_step(model: Restorer, params: ParamStore, cfg: TrainConfig, xs, ys, lr: float) -> float:
    out = model(Tensor(xs, dtype=np.float32))
    loss = total_loss(out, Tensor(ys, dtype=np.float32), cfg.model)
    adam_step(params, backward(loss, params), lr)
    return loss.item()


@dataclass
class TrainResult:
    model: Restorer
    params: ParamStore
    losses: list[float]
    seconds: float


def train(
    cfg: TrainConfig,
    log: TextIO | None = sys.stdout,
    out_dir: str | Path | None = None,
    source: BatchSource | None = None,
) -> TrainResult:
    """Run ``cfg.steps`` Adam steps with the cosine schedule.

    Logs ``step=<n> loss=<f> lr=<f>`` every ``log_every`` steps. When
    ``out_dir`` is set, checkpoints land there every ``ckpt_every`` steps and
    at the end as ``final.ckpt``.
    """
    model, params = build_model(cfg.model, cfg.seed)
    source = source or batch_source(cfg)
    digest = cfg.model.digest()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    losses = []
    start = time.perf_counter()
    for step, (xs, ys) in enumerate(source.iterate(0, cfg.steps, cfg.prefetch)):
        lr = lr_at(step, cfg.steps, cfg.lr_init, cfg.lr_final)
        loss = train_step(model, params, cfg, xs, ys, lr)
        losses.append(loss)
        n = step + 1
        if log is not None and cfg.log_every and (n % cfg.log_every == 0 or n == cfg.steps):
            print(f"step={n} loss={loss:.6f} lr={lr:.6g}", file=log, flush=True)
        if out_dir is not None and cfg.ckpt_every and n % cfg.ckpt_every == 0 and n != cfg.steps:
            checkpoint.save(out_dir / f"step{n:07d}.ckpt", params, digest)
    if out_dir is not None:
        checkpoint.save(out_dir / "final.ckpt", params, digest)
    return TrainResult(model, params, losses, time.perf_counter() - start)

