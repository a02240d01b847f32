"""8-bit RGB image files.

Portable pixmaps (``P6`` binary and ``P3`` text) are read and written
directly. Other formats go through Pillow when it is installed.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .autodiff import Tensor

PNM_SUFFIXES = {".ppm", ".pnm"}


class ImageError(ValueError):
    pass


def _tokens(buf: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageError("truncated pixmap header")
        out.append(buf[start:pos])
    return out, pos


def decode_ppm(buf: bytes) -> np.ndarray:
    """Decode a P6/P3 pixmap into an ``(H, W, 3)`` uint8 array."""
    magic = buf[:2]
    if magic in (b"P5", b"P2", b"P4", b"P1"):
        raise ImageError("not an RGB image (grey or bitmap pixmap)")
    if magic not in (b"P6", b"P3"):
        raise ImageError("not a portable pixmap")
    (w, h, maxval), pos = _tokens(buf, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise ImageError("malformed pixmap header") from None
    if w < 1 or h < 1:
        raise ImageError(f"bad pixmap extents {w}x{h}")
    if maxval != 255:
        raise ImageError(f"only 8-bit pixmaps (maxval 255) are supported, got {maxval}")
    count = w * h * 3
    if magic == b"P6":
        body = buf[pos + 1 : pos + 1 + count]
        if len(body) != count:
            raise ImageError("truncated pixmap data")
        arr = np.frombuffer(body, dtype=np.uint8)
    else:
        values, _ = _tokens(buf, count, pos)
        arr = np.array([int(v) for v in values])
        if arr.min() < 0 or arr.max() > 255:
            raise ImageError("pixmap sample out of range")
        arr = arr.astype(np.uint8)
    return arr.reshape(h, w, 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def read_pixels(path: str | os.PathLike) -> np.ndarray:
    """Decoded ``(H, W, 3)`` uint8 pixels."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as e:
        raise ImageError(f"cannot read {path}: {e.strerror}") from None
    if path.suffix.lower() in PNM_SUFFIXES or buf[:1] == b"P":
        return decode_ppm(buf)
    try:
        from PIL import Image
    except ImportError:
        raise ImageError(f"{path}: only portable pixmaps are supported without Pillow") from None
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA", "P"):
                raise ImageError(f"{path}: not an RGB image (mode {im.mode})")
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as e:
        raise ImageError(f"cannot decode {path}: {e}") from None


def load_image(path: str | os.PathLike) -> Tensor:
    """``(1, H, W, 3)`` tensor with values ``pixel / 255``."""
    pixels = read_pixels(path)
    return Tensor(pixels[None].astype(np.float32) / np.float32(255.0))


def quantize(img) -> np.ndarray:
    a = np.asarray(getattr(img, "data", img), dtype=np.float64)
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img, path: str | os.PathLike) -> None:
    """Write an ``(H, W, 3)`` or ``(1, H, W, 3)`` image, clamped to [0, 1] and rounded."""
    a = np.asarray(getattr(img, "data", img))
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ImageError(f"save_image takes a single image, got batch of {a.shape[0]}")
        a = a[0]
    if a.ndim != 3 or a.shape[-1] != 3:
        raise ImageError(f"expected an RGB image, got shape {a.shape}")
    pixels = quantize(a)
    path = Path(path)
    if path.suffix.lower() in PNM_SUFFIXES:
        path.write_bytes(encode_ppm(pixels))
        return
    try:
        from PIL import Image
    except ImportError:
        raise ImageError(f"{path}: only portable pixmaps can be written without Pillow") from None
    Image.fromarray(pixels, "RGB").save(path)
