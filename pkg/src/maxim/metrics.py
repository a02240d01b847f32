"""Image quality metrics on arrays in ``[0, 1]`` with channels last."""

from __future__ import annotations

import math

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_array(img) -> np.ndarray:
    data = getattr(img, "data", img)
    return np.asarray(data, dtype=np.float64)


def luma(img) -> np.ndarray:
    """Full-range luma of an RGB image, keeping a trailing channel axis of 1."""
    a = _as_array(img)
    if a.shape[-1] != 3:
        raise ValueError(f"luma needs 3 trailing channels, got shape {a.shape}")
    return (a @ LUMA)[..., None]


def psnr(a, b, peak: float = 1.0, y_only: bool = False) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    if y_only:
        a, b = luma(a), luma(b)
    err = float(np.mean(np.square(a - b)))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2-D map with ``outer(g, g)``."""
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def _ssim_plane(x: np.ndarray, y: np.ndarray, g: np.ndarray, data_range: float) -> float:
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, y_only: bool = False, data_range: float = 1.0) -> float:
    """Single-scale SSIM averaged over valid window positions and channels.

    Accepts ``(H, W)``, ``(H, W, C)`` or ``(N, H, W, C)`` inputs; a batch is
    averaged image by image.
    """
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if y_only:
        a, b = luma(a), luma(b)
    if a.ndim == 2:
        a, b = a[None, ..., None], b[None, ..., None]
    elif a.ndim == 3:
        a, b = a[None], b[None]
    if a.shape[1] < SSIM_WINDOW or a.shape[2] < SSIM_WINDOW:
        raise ValueError(f"image {a.shape[1:3]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    scores = [
        _ssim_plane(a[n, :, :, c], b[n, :, :, c], g, data_range) for n in range(a.shape[0]) for c in range(a.shape[3])
    ]
    return float(np.mean(scores))
