"""Central finite-difference gradient verification."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np

from .tensor import Graph, NonFiniteError, Tensor, no_grad, precision


def grad_check(
    f: Callable[..., Tensor],
    inputs: np.ndarray | Sequence[np.ndarray],
    h: float = 1e-5,
    *,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` receives one float64 :class:`Tensor` per array in ``inputs`` and must
    return a scalar. The error per coordinate is
    ``|g_fd - g_ad| / max(1e-8, |g_fd| + |g_ad|)``. With ``max_coords`` only a
    seeded random subset of coordinates is probed (large parameter sets).
    """
    with precision(np.float64):
        return _grad_check(f, inputs, h, max_coords, seed)


def _grad_check(f, inputs, h, max_coords, seed) -> float:
    single = isinstance(inputs, np.ndarray)
    arrays = [np.array(a, dtype=np.float64) for a in ([inputs] if single else inputs)]

    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    out = f(*tensors)
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    if out.dtype != np.float64:
        raise TypeError("grad_check must run in 64-bit mode (wrap in precision(np.float64))")
    grads = Graph(out).backward() if out.requires_grad else {}
    analytic = [grads.get(id(t), np.zeros(t.shape)) for t in tensors]

    coords = [(i, j) for i, a in enumerate(arrays) for j in range(a.size)]
    if max_coords is not None and len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    def value(i: int, j: int, delta: float) -> float:
        probe = arrays[i].copy()
        probe.reshape(-1)[j] += delta
        args = [Tensor(probe if k == i else a, dtype=np.float64) for k, a in enumerate(arrays)]
        with no_grad():
            v = f(*args).item()
        if not math.isfinite(v):
            raise NonFiniteError(f"f is not finite at probe ({i}, {j})")
        return v

    worst = 0.0
    for i, j in coords:
        g_fd = (value(i, j, h) - value(i, j, -h)) / (2.0 * h)
        g_ad = float(np.reshape(analytic[i], -1)[j])
        err = abs(g_fd - g_ad) / max(1e-8, abs(g_fd) + abs(g_ad))
        worst = max(worst, err)
    return worst
