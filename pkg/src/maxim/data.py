"""Training data: procedural clean images, synthetic degradations, augmentation, batching.

Every random draw comes from a generator derived from ``(seed, step)``, so the
batch sequence is fixed by the seed no matter how far ahead batches are built.
"""

from __future__ import annotations

import concurrent.futures
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imageio import read_pixels

DEGRADATIONS = ("gaussian_noise", "box_blur", "motion_blur")


# ------------------------------------------------------------- clean images


def synthetic_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """A piecewise-smooth RGB scene: shaded background, flat shapes and soft stripes."""
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
    corners = rng.uniform(0.1, 0.9, size=(4, 3))
    img = (
        corners[0] * ((1 - yy) * (1 - xx))[..., None]
        + corners[1] * ((1 - yy) * xx)[..., None]
        + corners[2] * (yy * (1 - xx))[..., None]
        + corners[3] * (yy * xx)[..., None]
    )
    for _ in range(rng.integers(4, 9)):
        color = rng.uniform(0, 1, size=3)
        cy, cx = rng.uniform(0, 1, size=2)
        ry, rx = rng.uniform(0.05, 0.3, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1
        img[mask] = color
    freq = rng.uniform(2, 8)
    angle = rng.uniform(0, np.pi)
    stripes = 0.08 * np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy))
    return np.clip(img + stripes[..., None], 0.0, 1.0)


def synthetic_images(count: int, size: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng([seed, 0x5EED])
    return [synthetic_image(rng, size) for _ in range(count)]


def load_dir(path: str | Path) -> list[np.ndarray]:
    """Every image in a directory (sorted by name) as float arrays in [0, 1]."""
    files = sorted(p for p in Path(path).iterdir() if p.is_file())
    if not files:
        raise FileNotFoundError(f"no images in {path}")
    return [read_pixels(p).astype(np.float64) / 255.0 for p in files]


def load_pairs(path: str | Path) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(degraded, clean)`` pairs from ``<path>/input`` and ``<path>/target`` matched by file name."""
    root = Path(path)
    inp, tgt = root / "input", root / "target"
    if not inp.is_dir() or not tgt.is_dir():
        raise FileNotFoundError(f"{root} must contain input/ and target/ directories")
    names = sorted(p.name for p in inp.iterdir() if p.is_file())
    missing = [n for n in names if not (tgt / n).is_file()]
    if not names or missing:
        raise FileNotFoundError(f"unpaired or empty dataset in {root}: missing targets {missing[:3]}")
    pairs = []
    for n in names:
        a = read_pixels(inp / n).astype(np.float64) / 255.0
        b = read_pixels(tgt / n).astype(np.float64) / 255.0
        if a.shape != b.shape:
            raise ValueError(f"{n}: input {a.shape} and target {b.shape} differ")
        pairs.append((a, b))
    return pairs


# ------------------------------------------------------------- degradations


def box_kernel(size: int) -> np.ndarray:
    return np.full((size, size), 1.0 / size**2)


def motion_kernel(length: int, angle: float) -> np.ndarray:
    """Normalised line of ``length`` samples through the centre at ``angle`` radians."""
    k = np.zeros((length, length))
    c = (length - 1) / 2
    for t in np.linspace(-c, c, 4 * length):
        i = int(round(c + t * np.sin(angle)))
        j = int(round(c + t * np.cos(angle)))
        k[i, j] = 1.0
    return k / k.sum()


def blur(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate each channel with ``kernel`` using reflect padding (output keeps the extents)."""
    kh, kw = kernel.shape
    top, left = (kh - 1) // 2, (kw - 1) // 2
    pad = ((top, kh - 1 - top), (left, kw - 1 - left), (0, 0))
    padded = np.pad(img, pad, mode="reflect" if min(img.shape[:2]) > max(kh, kw) else "symmetric")
    out = np.zeros_like(img, dtype=np.float64)
    h, w = img.shape[:2]
    for a in range(kh):
        for b in range(kw):
            if kernel[a, b]:
                out += kernel[a, b] * padded[a : a + h, b : b + w]
    return out


def synth_pair(kind: str, clean: np.ndarray, params: dict, rng: np.random.Generator):
    """``(degraded, clean)`` for one of :data:`DEGRADATIONS`.

    ``gaussian_noise`` takes ``sigma`` on the 0-255 scale; ``box_blur`` takes
    ``size``; ``motion_blur`` takes ``length`` and optionally ``angle`` (drawn
    uniformly when absent).
    """
    clean = np.asarray(clean, dtype=np.float64)
    if kind == "gaussian_noise":
        sigma = float(params.get("sigma", 25.0))
        if sigma < 0:
            raise ValueError("sigma must be non-negative")
        if sigma == 0:
            return clean.copy(), clean
        return clean + rng.normal(0.0, sigma / 255.0, size=clean.shape), clean
    if kind == "box_blur":
        size = int(params.get("size", 5))
        if size < 1:
            raise ValueError("box size must be at least 1")
        return blur(clean, box_kernel(size)), clean
    if kind == "motion_blur":
        length = int(params.get("length", 9))
        if length < 1:
            raise ValueError("motion length must be at least 1")
        angle = params.get("angle")
        angle = rng.uniform(0, np.pi) if angle is None else float(angle)
        return blur(clean, motion_kernel(length, angle)), clean
    raise ValueError(f"unknown degradation {kind!r}; expected one of {DEGRADATIONS}")


# ------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentConfig:
    hflip: bool = True
    vflip: bool = True
    rot90: bool = True
    mixup_p: float = 0.5
    mixup_alpha: float = 1.2

    @classmethod
    def disabled(cls) -> AugmentConfig:
        return cls(False, False, False, 0.0)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1]


def vflip(img: np.ndarray) -> np.ndarray:
    return img[::-1]


def mixup(pair, partner, gamma: float):
    """Blend two pairs with weight ``gamma`` on the first, identically for inputs and targets."""
    return tuple(gamma * a + (1.0 - gamma) * b for a, b in zip(pair, partner))


def augment(pair, cfg: AugmentConfig, rng: np.random.Generator, partner=None):
    """Apply one random geometric transform to both images, then MixUp with ``partner``."""
    x, y = pair
    if x.shape != y.shape:
        raise ValueError(f"pair extents differ: {x.shape} vs {y.shape}")
    if cfg.hflip and rng.random() < 0.5:
        x, y = hflip(x), hflip(y)
    if cfg.vflip and rng.random() < 0.5:
        x, y = vflip(x), vflip(y)
    if cfg.rot90 and x.shape[0] == x.shape[1]:
        k = int(rng.integers(4))
        x, y = np.rot90(x, k), np.rot90(y, k)
    if partner is not None and cfg.mixup_p > 0 and rng.random() < cfg.mixup_p:
        gamma = rng.beta(cfg.mixup_alpha, cfg.mixup_alpha)
        x, y = mixup((x, y), partner, gamma)
    return np.ascontiguousarray(x), np.ascontiguousarray(y)


# ------------------------------------------------------------------ batches


def random_crop(img: np.ndarray, size: int, rng: np.random.Generator, other: np.ndarray | None = None):
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} is smaller than the {size} patch")
    i, j = int(rng.integers(h - size + 1)), int(rng.integers(w - size + 1))
    crop = img[i : i + size, j : j + size]
    return crop if other is None else (crop, other[i : i + size, j : j + size])


class BatchSource:
    """Deterministic stream of ``(inputs, targets)`` float32 batches of shape ``(B, P, P, 3)``.

    With ``clean`` images, degraded inputs are synthesised on the fly; with
    ``pairs`` the stored degraded/clean pairs are cropped jointly.
    """

    def __init__(
        self,
        *,
        patch: int,
        batch: int,
        seed: int,
        augment_cfg: AugmentConfig,
        clean: list[np.ndarray] | None = None,
        pairs: list[tuple[np.ndarray, np.ndarray]] | None = None,
        kind: str = "gaussian_noise",
        params: dict | None = None,
    ):
        if (clean is None) == (pairs is None):
            raise ValueError("give exactly one of clean images or stored pairs")
        self.patch, self.batch, self.seed = patch, batch, seed
        self.augment_cfg = augment_cfg
        self.clean, self.pairs = clean, pairs
        self.kind, self.params = kind, dict(params or {})

    def _pair(self, rng: np.random.Generator):
        if self.pairs is not None:
            x, y = self.pairs[int(rng.integers(len(self.pairs)))]
            return random_crop(x, self.patch, rng, y)
        img = self.clean[int(rng.integers(len(self.clean)))]
        return synth_pair(self.kind, random_crop(img, self.patch, rng), self.params, rng)

    def batch_at(self, step: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.seed, step])
        raw = [self._pair(rng) for _ in range(self.batch)]
        partners = rng.permutation(self.batch)
        out = [augment(raw[i], self.augment_cfg, rng, raw[partners[i]]) for i in range(self.batch)]
        xs = np.stack([p[0] for p in out]).astype(np.float32)
        ys = np.stack([p[1] for p in out]).astype(np.float32)
        return xs, ys

    def iterate(self, start: int, stop: int, prefetch: int = 2) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Batches for ``start <= step < stop`` in order, built up to ``prefetch`` steps ahead."""
        if prefetch <= 0:
            for step in range(start, stop):
                yield self.batch_at(step)
            return
        with concurrent.futures.ThreadPoolExecutor(max_workers=1) as pool:
            pending = [pool.submit(self.batch_at, s) for s in range(start, min(stop, start + prefetch))]
            nxt = start + len(pending)
            while pending:
                batch = pending.pop(0).result()
                if nxt < stop:
                    pending.append(pool.submit(self.batch_at, nxt))
                    nxt += 1
                yield batch
