"""Differentiable primitives over :class:`~maxim.autodiff.tensor.Tensor`.

Layout convention: images are ``(batch, height, width, channels)`` row-major,
so channel-wise layers act on the contiguous last axis.

Every primitive (1) derives its output shape, (2) reports its arithmetic cost
to the active cost recorder and (3) either returns a meta tensor or computes
values and a backward rule. Cost convention: ``macs`` counts multiply-
accumulates of matrix products and convolutions, ``ops`` counts every other
arithmetic operation with the fixed per-element weights below.
"""

from __future__ import annotations

import builtins
import math
from collections.abc import Sequence

import numpy as np

from . import kernels
from .tensor import Tensor, as_tensor, count, make_node

GELU_OPS = 8
SIGMOID_OPS = 4
LAYERNORM_OPS = 7
SOFTMAX_OPS = 3

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715



def _any_meta(*ts) -> bool:
    return any(isinstance(t, Tensor) and t.data is None for t in ts)


def _sum_axes(a: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """``a.sum(axis=axes, keepdims=True)``; a contiguous run of axes goes through BLAS."""
    kept = tuple(1 if i in axes else s for i, s in enumerate(a.shape))
    if not axes:
        return a
    lo, hi = axes[0], axes[-1] + 1
    # float64 is the verification mode: keep numpy's more accurate pairwise summation there
    if hi - lo != len(axes) or not a.flags.c_contiguous or a.dtype != np.float32:
        return a.sum(axis=axes, keepdims=True)
    r = math.prod(a.shape[lo:hi])
    a3 = a.reshape(math.prod(a.shape[:lo]), r, math.prod(a.shape[hi:]))
    # a matrix-vector product with ones is far faster than numpy's pairwise reduction
    return np.matmul(np.ones(r, dtype=a.dtype), a3).reshape(kept)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over the axes that broadcasting expanded to reach ``g.shape``."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = _sum_axes(g, tuple(range(lead))).reshape(g.shape[lead:])
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    return _sum_axes(g, axes)


def _broadcast_shape(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ValueError(f"shapes {a} and {b} do not broadcast") from None


# --------------------------------------------------------------- elementwise


def _binary(a, b, op: str):
    a_t, b_t = isinstance(a, Tensor), isinstance(b, Tensor)
    if not a_t and not b_t:
        raise TypeError("at least one operand must be a Tensor")
    sa = a.shape if a_t else np.shape(a)
    sb = b.shape if b_t else np.shape(b)
    shape = _broadcast_shape(sa, sb)
    count(ops=math.prod(shape))
    if _any_meta(a, b):
        dtype = a.dtype if a_t else b.dtype
        return Tensor.meta(shape, dtype), None, None
    ad = a.data if a_t else np.asarray(a, dtype=b.dtype)
    bd = b.data if b_t else np.asarray(b, dtype=a.dtype)
    return shape, ad, bd


def add(a, b) -> Tensor:
    shape, ad, bd = _binary(a, b, "add")
    if ad is None:
        return shape
    sa, sb = np.shape(ad), np.shape(bd)

    def backward(g):
        return _grads(a, b, lambda: _unbroadcast(g, sa), lambda: _unbroadcast(g, sb))

    return make_node(ad + bd, _parents(a, b), backward, "add")


def sub(a, b) -> Tensor:
    shape, ad, bd = _binary(a, b, "sub")
    if ad is None:
        return shape
    sa, sb = np.shape(ad), np.shape(bd)

    def backward(g):
        return _grads(a, b, lambda: _unbroadcast(g, sa), lambda: _unbroadcast(-g, sb))

    return make_node(ad - bd, _parents(a, b), backward, "sub")


def mul(a, b) -> Tensor:
    shape, ad, bd = _binary(a, b, "mul")
    if ad is None:
        return shape
    sa, sb = np.shape(ad), np.shape(bd)

    def backward(g):
        return _grads(a, b, lambda: _unbroadcast(g * bd, sa), lambda: _unbroadcast(g * ad, sb))

    return make_node(ad * bd, _parents(a, b), backward, "mul")


def div(a, b) -> Tensor:
    shape, ad, bd = _binary(a, b, "div")
    if ad is None:
        return shape
    sa, sb = np.shape(ad), np.shape(bd)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def backward(g):
        return _grads(a, b, lambda: _unbroadcast(g / bd, sa), lambda: _unbroadcast(-g / bd * out, sb))

    return make_node(out, _parents(a, b), backward, "div")


def _parents(a, b) -> tuple[Tensor, ...]:
    # constants (python numbers, arrays) never need gradients
    return tuple(t for t in (a, b) if isinstance(t, Tensor))


def _grads(a, b, ga, gb) -> tuple:
    """Lazily evaluated gradients, one per Tensor operand."""
    out = []
    for t, fn in ((a, ga), (b, gb)):
        if isinstance(t, Tensor):
            out.append(fn() if t.requires_grad else None)
    return tuple(out)


def _unary(x: Tensor, cost: int):
    count(ops=cost * x.size)
    return x.data is None


def neg(x: Tensor) -> Tensor:
    if _unary(x, 1):
        return Tensor.meta(x.shape, x.dtype)
    return make_node(-x.data, (x,), lambda g: (-g,), "neg")


def square(x: Tensor) -> Tensor:
    if _unary(x, 1):
        return Tensor.meta(x.shape, x.dtype)
    xd = x.data
    return make_node(xd * xd, (x,), lambda g: (2.0 * xd * g,), "square")


def sqrt(x: Tensor) -> Tensor:
    if _unary(x, 1):
        return Tensor.meta(x.shape, x.dtype)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)

    def backward(g):
        with np.errstate(divide="ignore"):
            return (g * 0.5 / out,)

    return make_node(out, (x,), backward, "sqrt")


def exp(x: Tensor) -> Tensor:
    if _unary(x, 1):
        return Tensor.meta(x.shape, x.dtype)
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    if _unary(x, 1):
        return Tensor.meta(x.shape, x.dtype)
    xd = x.data
    return make_node(np.abs(xd), (x,), lambda g: (g * np.sign(xd),), "abs")


# ---------------------------------------------------------------- reductions


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    kept = tuple(1 if i in axes else s for i, s in enumerate(x.shape))
    shape = kept if keepdims else tuple(s for i, s in enumerate(x.shape) if i not in axes)
    count(ops=x.size)
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    out = _sum_axes(x.data, axes).reshape(shape)
    xshape = x.shape

    def backward(g):
        return (np.broadcast_to(np.reshape(g, kept), xshape),)

    return make_node(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = math.prod(x.shape[a] for a in axes)
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes with numpy broadcasting."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with at least two axes")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    batch = _broadcast_shape(a.shape[:-2], b.shape[:-2])
    shape = batch + (a.shape[-2], b.shape[-1])
    count(macs=math.prod(shape) * a.shape[-1])
    if _any_meta(a, b):
        return Tensor.meta(shape, a.dtype)
    ad, bd = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return make_node(ad @ bd, (a, b), backward, "matmul")


def _rows_matmul(a2: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a2 @ b`` whose rows do not depend on how many rows are stacked.

    BLAS switches to a matrix-vector kernel for a single row, which sums in a
    different order; duplicating the row keeps every batch size on gemm.
    """
    if a2.shape[0] == 1:
        return (np.concatenate([a2, a2]) @ b)[:1]
    return a2 @ b


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; leading axes are batched."""
    cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ValueError(f"dense expects last extent {cin}, got {x.shape}")
    shape = x.shape[:-1] + (cout,)
    rows = math.prod(x.shape[:-1])
    count(macs=rows * cin * cout, ops=rows * cout if b is not None else 0)
    if _any_meta(x, w, b):
        return Tensor.meta(shape, x.dtype)
    x2 = x.data.reshape(rows, cin)
    wd = w.data
    out = _rows_matmul(x2, wd)
    if b is not None:
        kernels.add_bias(out, b.data)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g2 = g.reshape(rows, cout)
        gx = (g2 @ wd.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if w.requires_grad else None
        if b is None:
            return gx, gw
        gb = np.ones(rows, dtype=g2.dtype) @ g2 if b.requires_grad else None
        return gx, gw, gb

    return make_node(out.reshape(shape), parents, backward, "dense")


def axis_linear(x: Tensor, w: Tensor, b: Tensor | None = None, axis: int = -2) -> Tensor:
    """Linear map along one axis: ``out[.., i, ..] = sum_j w[i, j] x[.., j, ..] + b[i]``.

    This is the spatial (token) projection of the gated MLP family: the same
    ``w`` is shared by every index of all other axes.
    """
    axis %= x.ndim
    lout, lin = w.shape
    if x.shape[axis] != lin:
        raise ValueError(f"axis {axis} has extent {x.shape[axis]}, projection expects {lin}")
    pre = math.prod(x.shape[:axis])
    post = math.prod(x.shape[axis + 1 :])
    shape = x.shape[:axis] + (lout,) + x.shape[axis + 1 :]
    count(macs=pre * post * lin * lout, ops=pre * post * lout if b is not None else 0)
    if _any_meta(x, w, b):
        return Tensor.meta(shape, x.dtype)
    x3 = x.data.reshape(pre, lin, post)
    wd = w.data
    out = np.matmul(wd, x3)
    if b is not None:
        kernels.add_bias_mid(out, b.data)
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g3 = g.reshape(pre, lout, post)
        gx = np.matmul(wd.T, g3).reshape(x.shape) if x.requires_grad else None
        gw = None
        if w.requires_grad:
            if pre == 1:
                gw = g3[0] @ x3[0].T
            else:
                gw = g3.transpose(1, 0, 2).reshape(lout, -1) @ x3.transpose(1, 0, 2).reshape(lin, -1).T
        if b is None:
            return gx, gw
        gb = None
        if b.requires_grad:
            gb = _sum_axes(g3.reshape(pre, lout * post), (0,)).reshape(lout, post).sum(axis=1)
        return gx, gw, gb

    return make_node(out.reshape(shape), parents, backward, "axis_linear")


def conv2d(x: Tensor, k: Tensor, b: Tensor | None = None, stride: int = 1, padding: str = "same") -> Tensor:
    """2-D cross-correlation on ``(N, H, W, Cin)`` with kernel ``(kh, kw, Cin, Cout)``."""
    n, h, w_, cin = x.shape
    kh, kw, kcin, cout = k.shape
    if kcin != cin:
        raise ValueError(f"kernel expects {kcin} input channels, got {cin}")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("same padding needs odd kernel extents")
        if stride == 2 and (h % 2 or w_ % 2):
            raise ValueError(f"stride 2 needs even spatial extents, got {(h, w_)}")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    hp, wp = h + 2 * ph, w_ + 2 * pw
    if kh > hp or kw > wp:
        raise ValueError("kernel larger than padded input")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    shape = (n, ho, wo, cout)
    rows = n * ho * wo
    count(macs=rows * kh * kw * cin * cout, ops=rows * cout if b is not None else 0)
    if _any_meta(x, k, b):
        return Tensor.meta(shape, x.dtype)

    kmat = k.data.reshape(kh * kw * cin, cout)
    parents = (x, k) if b is None else (x, k, b)
    pointwise = kh == kw == 1 and stride == 1
    if pointwise:
        cols = x.data.reshape(rows, cin)
    else:
        cols = np.empty((n, ho, wo, kh * kw * cin), dtype=x.dtype)
        kernels.im2col(x.data, kh, kw, stride, ph, pw, ho, wo, cols)
        cols = cols.reshape(rows, kh * kw * cin)
    out = _rows_matmul(cols, kmat)
    if b is not None:
        kernels.add_bias(out, b.data)

    def backward(g):
        g2 = g.reshape(rows, cout)
        gk = (cols.T @ g2).reshape(k.shape) if k.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = g2 @ kmat.T
            if pointwise:
                gx = gcols.reshape(x.shape)
            else:
                gx = np.empty(x.shape, dtype=g.dtype)
                kernels.col2im(gcols.reshape(n, ho, wo, kh * kw * cin), kh, kw, stride, ph, pw, gx)
        if b is None:
            return gx, gk
        gb = np.ones(rows, dtype=g2.dtype) @ g2 if b.requires_grad else None
        return gx, gk, gb

    return make_node(out.reshape(shape), parents, backward, "conv2d")


# ------------------------------------------------------------ normalisation


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalise each position over the channel axis, then apply the affine map."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"affine parameters must have shape ({c},)")
    rows = x.size // c
    count(ops=LAYERNORM_OPS * x.size + 2 * rows)
    if _any_meta(x, gamma, beta):
        return Tensor.meta(x.shape, x.dtype)
    x2 = x.data.reshape(rows, c)
    out = np.empty_like(x2)
    xhat = np.empty_like(x2)
    rstd = np.empty(rows, dtype=x2.dtype)
    kernels.layernorm_fwd(x2, gamma.data, beta.data, x2.dtype.type(eps), out, xhat, rstd)
    gd = gamma.data

    def backward(g):
        gx = np.empty_like(xhat)
        ggamma = np.empty(c, dtype=xhat.dtype)
        gbeta = np.empty(c, dtype=xhat.dtype)
        kernels.layernorm_bwd(g.reshape(rows, c), xhat, rstd, gd, gx, ggamma, gbeta)
        return (
            gx.reshape(x.shape) if x.requires_grad else None,
            ggamma if gamma.requires_grad else None,
            gbeta if beta.requires_grad else None,
        )

    return make_node(out.reshape(x.shape), (x, gamma, beta), backward, "layernorm")


# --------------------------------------------------------------- activations


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: ``0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))``."""
    if _unary(x, GELU_OPS):
        return Tensor.meta(x.shape, x.dtype)
    xd = x.data
    # in place: the temporaries here dominate the cost on large maps
    t = np.square(xd)
    t *= _GELU_CUBIC
    t += 1.0
    t *= xd
    t *= _SQRT_2_OVER_PI
    np.tanh(t, out=t)
    out = t + 1.0
    out *= xd
    out *= 0.5

    def backward(g):
        d = np.square(xd)
        d *= 3.0 * _GELU_CUBIC
        d += 1.0
        d *= _SQRT_2_OVER_PI
        d *= xd
        gx = np.square(t)
        np.subtract(1.0, gx, out=gx)
        gx *= d
        gx += 1.0
        gx += t
        gx *= 0.5
        gx *= g
        return (gx,)

    return make_node(out, (x,), backward, "gelu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if _unary(x, 1):
        return Tensor.meta(x.shape, x.dtype)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)
    return make_node(out, (x,), lambda g: (np.where(pos, g, slope * g),), "leaky_relu")


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    if _unary(x, SIGMOID_OPS):
        return Tensor.meta(x.shape, x.dtype)
    # tanh form is overflow-free for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def activation(kind: str, x: Tensor, slope: float = 0.2) -> Tensor:
    if kind == "gelu":
        return gelu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation {kind!r}")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if _unary(x, SOFTMAX_OPS):
        return Tensor.meta(x.shape, x.dtype)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), backward, "softmax")


# ----------------------------------------------------------- shape movement


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if -1 in shape:
        known = math.prod(s for s in shape if s != -1)
        shape = tuple(x.size // known if s == -1 else s for s in shape)
    if math.prod(shape) != x.size:
        raise ValueError(f"cannot reshape {x.shape} into {shape}")
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    src = x.shape
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) % x.ndim for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ValueError(f"invalid permutation {axes} for {x.ndim} axes")
    shape = tuple(x.shape[a] for a in axes)
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    inv = tuple(np.argsort(axes))
    return make_node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    axis %= tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != axis
        ):
            raise ValueError("concat operands differ off the concatenation axis")
    sizes = [t.shape[axis] for t in tensors]
    shape = tensors[0].shape[:axis] + (builtins.sum(sizes),) + tensors[0].shape[axis + 1 :]
    if _any_meta(*tensors):
        return Tensor.meta(shape, tensors[0].dtype)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        index = [slice(None)] * g.ndim
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            index[axis] = slice(int(lo), int(hi))
            parts.append(g[tuple(index)])
        return tuple(parts)

    return make_node(out, tensors, backward, "concat")


def slice_axis(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    axis %= x.ndim
    if not 0 <= start < stop <= x.shape[axis]:
        raise ValueError(f"bad slice [{start}:{stop}] on extent {x.shape[axis]}")
    shape = x.shape[:axis] + (stop - start,) + x.shape[axis + 1 :]
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    src = x.shape

    def backward(g):
        full = np.zeros(src, dtype=g.dtype)
        full[index] = g
        return (full,)

    return make_node(x.data[index], (x,), backward, "slice")


def split(x: Tensor, sections: int, axis: int = -1) -> list[Tensor]:
    axis %= x.ndim
    extent = x.shape[axis]
    if extent % sections:
        raise ValueError(f"extent {extent} does not split into {sections} equal parts")
    step = extent // sections
    return [slice_axis(x, i * step, (i + 1) * step, axis) for i in range(sections)]


def crop(x: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Spatial crop of an ``(N, H, W, C)`` tensor."""
    if top or height != x.shape[1]:
        x = slice_axis(x, top, top + height, axis=1)
    if left or width != x.shape[2]:
        x = slice_axis(x, left, left + width, axis=2)
    return x


def _pad_index(extent: int, before: int, after: int, mode: str) -> np.ndarray:
    pos = np.arange(-before, extent + after)
    if mode == "edge":
        return np.clip(pos, 0, extent - 1)
    if mode == "reflect":
        if extent == 1:
            return np.zeros_like(pos)
        period = 2 * (extent - 1)
        pos = np.mod(pos, period)
        return np.where(pos < extent, pos, period - pos)
    if mode == "symmetric":
        period = 2 * extent
        pos = np.mod(pos, period)
        return np.where(pos < extent, pos, period - 1 - pos)
    raise ValueError(f"unknown pad mode {mode!r}")


def gather(x: Tensor, index: np.ndarray, axis: int) -> Tensor:
    """``x`` indexed by an integer array along ``axis``; the adjoint scatter-adds."""
    axis %= x.ndim
    index = np.asarray(index, dtype=np.intp)
    shape = x.shape[:axis] + (len(index),) + x.shape[axis + 1 :]
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    src = x.shape

    def backward(g):
        full = np.zeros(src, dtype=g.dtype)
        gm = np.moveaxis(g, axis, 0)
        np.add.at(np.moveaxis(full, axis, 0), index, gm)
        return (full,)

    return make_node(np.take(x.data, index, axis=axis), (x,), backward, "gather")


def pad2d(x: Tensor, top: int, bottom: int, left: int, right: int, mode: str = "reflect") -> Tensor:
    """Pad the spatial axes of ``(N, H, W, C)``; ``mode`` in constant|reflect|symmetric|edge."""
    if min(top, bottom, left, right) < 0:
        raise ValueError("pad amounts must be non-negative")
    n, h, w, c = x.shape
    if mode == "constant":
        shape = (n, h + top + bottom, w + left + right, c)
        if x.data is None:
            return Tensor.meta(shape, x.dtype)
        out = np.zeros(shape, dtype=x.dtype)
        out[:, top : top + h, left : left + w, :] = x.data
        return make_node(out, (x,), lambda g: (g[:, top : top + h, left : left + w, :],), "pad")
    if mode == "reflect" and (max(top, bottom) >= h or max(left, right) >= w):
        raise ValueError("reflect padding must be smaller than the extent")
    if top or bottom:
        x = gather(x, _pad_index(h, top, bottom, mode), axis=1)
    if left or right:
        x = gather(x, _pad_index(w, left, right, mode), axis=2)
    return x


# ----------------------------------------------------------------- resampling


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    return np.minimum(((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.intp), n_in - 1)


def _bilinear_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Interpolation weights with half-pixel centres and clamped edges."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    """Integer-factor pixel replication of ``(N, H, W, C)``."""
    n, h, w, c = x.shape
    shape = (n, h * factor, w * factor, c)
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def backward(g):
        return (g.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return make_node(out, (x,), backward, "upsample_nearest")


def resize(x: Tensor, size: tuple[int, int], mode: str = "bilinear") -> Tensor:
    """Resample ``(N, H, W, C)`` to spatial ``size``.

    ``nearest`` picks the source pixel containing each output centre;
    ``bilinear`` interpolates with half-pixel centre alignment (no antialias).
    """
    n, h, w, c = x.shape
    th, tw = int(size[0]), int(size[1])
    if th < 1 or tw < 1:
        raise ValueError(f"target extents must be positive, got {(th, tw)}")
    if (th, tw) == (h, w):
        return x
    if mode == "nearest":
        if th % h == 0 and tw % w == 0 and th // h == tw // w:
            return upsample_nearest(x, th // h)
        if (th, tw) != (h, w):
            x = gather(x, _nearest_index(h, th), axis=1) if th != h else x
            x = gather(x, _nearest_index(w, tw), axis=2) if tw != w else x
        return x
    if mode != "bilinear":
        raise ValueError(f"unknown resize mode {mode!r}")
    count(ops=3 * (n * th * w * c) + 3 * (n * th * tw * c))
    shape = (n, th, tw, c)
    if x.data is None:
        return Tensor.meta(shape, x.dtype)
    mh = _bilinear_matrix(h, th, x.dtype)
    mw = _bilinear_matrix(w, tw, x.dtype)
    # H pass: (th, h) @ (n, h, w*c); W pass: (tw, w) @ (n*th, w, c)
    y = np.matmul(mh, x.data.reshape(n, h, w * c)).reshape(n * th, w, c)
    out = np.matmul(mw, y).reshape(shape)

    def backward(g):
        gy = np.matmul(mw.T, g.reshape(n * th, tw, c)).reshape(n, th, w * c)
        return (np.matmul(mh.T, gy).reshape(x.shape),)

    return make_node(out, (x,), backward, "resize_bilinear")


# ---------------------------------------------------------- frequency domain


def rfft2_l1diff(a: Tensor, b: Tensor) -> Tensor:
    """Mean over bins of ``|Re D| + |Im D|`` where ``D`` is the unnormalised 2-D DFT of ``a - b``.

    The transform runs over the spatial axes of ``(N, H, W, C)`` inputs; the
    mean covers all ``H * W`` bins of every batch element and channel.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    n, h, w, c = a.shape
    hw = h * w
    # 2 real transforms' worth of butterflies plus the |.| sums
    count(ops=5 * n * c * hw * max(1, math.ceil(math.log2(hw))) + 4 * a.size)
    if _any_meta(a, b):
        return Tensor.meta((), a.dtype)
    d = a.data - b.data
    spec = np.fft.fft2(d, axes=(1, 2))
    m = d.size
    value = (np.abs(spec.real).sum() + np.abs(spec.imag).sum()) / m
    out = np.asarray(value, dtype=a.dtype)

    def backward(g):
        coeff = np.sign(spec.real) + 1j * np.sign(spec.imag)
        gd = (np.fft.ifft2(coeff, axes=(1, 2)).real * (hw / m) * g).astype(a.dtype)
        return gd, -gd

    return make_node(out, (a, b), backward, "rfft2_l1diff")
