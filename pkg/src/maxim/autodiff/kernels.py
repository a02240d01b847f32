"""Compiled loops for the memory-bound primitives.

Each kernel makes one pass over its operands where the equivalent numpy
expression would allocate several temporaries. Results are deterministic and
identical in float32 and float64 up to the usual rounding of the operation
order written here.
"""

from __future__ import annotations

import math

import numba

_jit = numba.njit(cache=True, nogil=True)
_jit_fast = numba.njit(cache=True, nogil=True, fastmath=True)


@_jit
def im2col(x, kh, kw, stride, ph, pw, ho, wo, cols):
    """cols[n, i, j, (a * kw + b) * C + c] = x[n, i*s + a - ph, j*s + b - pw, c] (0 outside)."""
    n, h, w, c = x.shape
    for b_ in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(kh):
                    r = i * stride + a - ph
                    for b in range(kw):
                        q = j * stride + b - pw
                        base = (a * kw + b) * c
                        if 0 <= r < h and 0 <= q < w:
                            for ch in range(c):
                                cols[b_, i, j, base + ch] = x[b_, r, q, ch]
                        else:
                            for ch in range(c):
                                cols[b_, i, j, base + ch] = 0.0


@_jit
def col2im(gcols, kh, kw, stride, ph, pw, gx):
    """Adjoint of :func:`im2col`: scatter-add column gradients back onto ``gx``."""
    n, h, w, c = gx.shape
    ho, wo = gcols.shape[1], gcols.shape[2]
    gx[:] = 0.0
    for b_ in range(n):
        for i in range(ho):
            for j in range(wo):
                for a in range(kh):
                    r = i * stride + a - ph
                    if r < 0 or r >= h:
                        continue
                    for b in range(kw):
                        q = j * stride + b - pw
                        if q < 0 or q >= w:
                            continue
                        base = (a * kw + b) * c
                        for ch in range(c):
                            gx[b_, r, q, ch] += gcols[b_, i, j, base + ch]


@_jit_fast
def layernorm_fwd(x, gamma, beta, eps, out, xhat, rstd):
    rows, c = x.shape
    inv = x[0, 0] * 0 + 1.0 / c  # keeps the arithmetic in the input dtype
    for r in range(rows):
        # single pass over a shifted row; the shift keeps the variance well conditioned
        shift = x[r, 0]
        m = shift - shift
        q = m
        for k in range(c):
            v = x[r, k] - shift
            m += v
            q += v * v
        m *= inv
        var = q * inv - m * m
        if var < 0:
            var = var * 0
        s = 1 / math.sqrt(var + eps)
        m += shift
        rstd[r] = s
        for k in range(c):
            xh = (x[r, k] - m) * s
            xhat[r, k] = xh
            out[r, k] = xh * gamma[k] + beta[k]


@_jit_fast
def layernorm_bwd(g, xhat, rstd, gamma, gx, ggamma, gbeta):
    rows, c = g.shape
    ggamma[:] = 0.0
    gbeta[:] = 0.0
    for r in range(rows):
        m1 = 0.0
        m2 = 0.0
        for k in range(c):
            gh = g[r, k] * gamma[k]
            m1 += gh
            m2 += gh * xhat[r, k]
            ggamma[k] += g[r, k] * xhat[r, k]
            gbeta[k] += g[r, k]
        m1 /= c
        m2 /= c
        s = rstd[r]
        for k in range(c):
            gx[r, k] = s * (g[r, k] * gamma[k] - m1 - xhat[r, k] * m2)



@_jit_fast
def add_bias(out, bias):
    """``out[r, k] += bias[k]`` in place on a 2-D array."""
    rows, c = out.shape
    for r in range(rows):
        for k in range(c):
            out[r, k] += bias[k]


@_jit_fast
def add_bias_mid(out, bias):
    """``out[p, i, q] += bias[i]`` in place on a 3-D array."""
    pre, length, post = out.shape
    for p in range(pre):
        for i in range(length):
            v = bias[i]
            for q in range(post):
                out[p, i, q] += v
