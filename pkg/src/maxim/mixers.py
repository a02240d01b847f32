"""1-D token mixers mounted on one partition axis.

Every mixer is a residual module called as ``mixer(x, axis=k)`` where ``x``
has channels last and ``x.shape[k] == mixer.length``. Parameters depend only
on ``(length, channels)``, never on the other extents.
"""

from __future__ import annotations

import functools

import numpy as np

from .autodiff import Tensor, ops
from .nn import Dense, LayerNorm, Module, SpatialProjection, normal, zeros

KINDS = ("gmlp", "mlp", "fft", "sa")


class GatedMLP(Module):
    """gMLP block: channel MLP whose hidden half is gated by a token projection."""

    def __init__(self, channels: int, length: int, expansion: int = 2):
        super().__init__()
        hidden = expansion * channels
        if hidden % 2:
            raise ValueError(f"expansion*channels = {hidden} must be even to split")
        self.length, self.channels, self.half = length, channels, hidden // 2
        self.norm = LayerNorm(channels)
        self.proj_in = Dense(channels, hidden)
        self.gate_norm = LayerNorm(self.half)
        self.spatial = SpatialProjection(length)
        self.proj_out = Dense(self.half, channels)

    def forward(self, x: Tensor, axis: int = -2) -> Tensor:
        u1, u2 = (ops.gelu(u) for u in self.proj_in(self.norm(x), parts=2))
        v = self.spatial(self.gate_norm(u2), axis=axis)
        return ops.add(x, self.proj_out(ops.mul(u1, v)))


class TokenMLP(Module):
    """Plain token-mixing MLP along the mixed axis, shared across channels."""

    def __init__(self, channels: int, length: int, hidden_ratio: float = 0.5):
        super().__init__()
        self.length = length
        self.hidden = max(1, int(round(length * hidden_ratio)))
        self.norm = LayerNorm(channels)
        self.fc1 = SpatialProjection(length, self.hidden, bias_init=zeros, std=length**-0.5)
        self.fc2 = SpatialProjection(self.hidden, length, bias_init=zeros, std=0.02)

    def forward(self, x: Tensor, axis: int = -2) -> Tensor:
        h = ops.gelu(self.fc1(self.norm(x), axis=axis))
        return ops.add(x, self.fc2(h, axis=axis))


@functools.lru_cache(maxsize=64)
def _dft_matrices(length: int, dtype: str):
    """Real forward (cos, -sin) and inverse matrices for a length-L real DFT.

    The inverse folds the Hermitian mirror into per-bin weights, so the
    imaginary parts of the DC and Nyquist bins are discarded exactly as a
    real inverse transform does.
    """
    bins = length // 2 + 1
    k = np.arange(bins)[:, None]
    n = np.arange(length)[None, :]
    angle = 2.0 * np.pi * k * n / length
    fwd_re, fwd_im = np.cos(angle), -np.sin(angle)
    weight = np.full(bins, 2.0)
    weight[0] = 1.0
    if length % 2 == 0:
        weight[-1] = 1.0
    inv_re = (weight[:, None] * np.cos(angle)).T / length
    inv_im = (-weight[:, None] * np.sin(angle)).T / length
    return tuple(Tensor(m, dtype=dtype) for m in (fwd_re, fwd_im, inv_re, inv_im))


class FourierFilter(Module):
    """Global filter: per-channel complex gain on the real DFT of the mixed axis."""

    def __init__(self, channels: int, length: int):
        super().__init__()
        self.length = length
        self.bins = length // 2 + 1
        self.norm = LayerNorm(channels)
        self.param("filter_re", (self.bins, channels), normal(0.02))
        self.param("filter_im", (self.bins, channels), normal(0.02))

    def forward(self, x: Tensor, axis: int = -2) -> Tensor:
        axis %= x.ndim
        fwd_re, fwd_im, inv_re, inv_im = _dft_matrices(self.length, np.dtype(x.dtype).name)
        h = self.norm(x)
        re = ops.axis_linear(h, fwd_re, axis=axis)
        im = ops.axis_linear(h, fwd_im, axis=axis)
        bcast = (self.bins,) + (1,) * (x.ndim - axis - 2) + (x.shape[-1],)
        phi_re = ops.reshape(self.p("filter_re"), bcast)
        phi_im = ops.reshape(self.p("filter_im"), bcast)
        out_re = ops.sub(ops.mul(re, phi_re), ops.mul(im, phi_im))
        out_im = ops.add(ops.mul(re, phi_im), ops.mul(im, phi_re))
        y = ops.add(ops.axis_linear(out_re, inv_re, axis=axis), ops.axis_linear(out_im, inv_im, axis=axis))
        return ops.add(x, y)


def default_heads(channels: int) -> int:
    return 2 if channels <= 64 else 4


class SelfAttention(Module):
    """Single-layer multi-head dot-product attention along the mixed axis."""

    def __init__(self, channels: int, length: int, heads: int | None = None):
        super().__init__()
        heads = default_heads(channels) if heads is None else heads
        if channels % heads:
            raise ValueError(f"channels {channels} not divisible by {heads} heads")
        self.length, self.heads, self.head_dim = length, heads, channels // heads
        self.norm = LayerNorm(channels)
        self.qkv = Dense(channels, 3 * channels)
        self.out = Dense(channels, channels)

    def forward(self, x: Tensor, axis: int = -2) -> Tensor:
        axis %= x.ndim
        moved = axis != x.ndim - 2
        t = ops.swapaxes(x, axis, -2) if moved else x
        lead, (length, channels) = t.shape[:-2], t.shape[-2:]
        nl = len(lead)
        heads_first = tuple(range(nl)) + (nl + 1, nl, nl + 2)

        def split_heads(z):
            z = ops.reshape(z, lead + (length, self.heads, self.head_dim))
            return ops.transpose(z, heads_first)

        q, k, v = (split_heads(z) for z in ops.split(self.qkv(self.norm(t)), 3, axis=-1))
        scores = ops.mul(ops.matmul(q, ops.swapaxes(k, -1, -2)), self.head_dim**-0.5)
        attn = ops.softmax(scores, axis=-1)
        ctx = ops.transpose(ops.matmul(attn, v), heads_first)
        y = ops.add(t, self.out(ops.reshape(ctx, lead + (length, channels))))
        return ops.swapaxes(y, axis, -2) if moved else y


def make_mixer(kind: str, channels: int, length: int, *, expansion: int = 2) -> Module:
    if kind == "gmlp":
        return GatedMLP(channels, length, expansion)
    if kind == "mlp":
        return TokenMLP(channels, length)
    if kind == "fft":
        return FourierFilter(channels, length)
    if kind in ("sa", "self_attention"):
        return SelfAttention(channels, length)
    raise ValueError(f"unknown mixer kind {kind!r}; expected one of {KINDS}")

