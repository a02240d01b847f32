"""Adam with bias correction and the cosine-annealed learning rate."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import ParamStore

LR_INIT = 2e-4
LR_FINAL = 1e-7


def lr_at(step: int, total: int, lr_init: float = LR_INIT, lr_final: float = LR_FINAL) -> float:
    """Cosine decay from ``lr_init`` at step 0 to ``lr_final`` at ``total``."""
    if total <= 0:
        raise ValueError("total steps must be positive")
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + math.cos(math.pi * step / total))


def adam_step(
    params: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update of every parameter, in place on ``params``.

    Moment estimates live in ``params.state[name]`` as ``"m"`` and ``"v"``;
    ``params.step`` counts completed updates.
    """
    if set(grads) != set(params.names()):
        extra = sorted(set(grads) - set(params.names()))
        missing = sorted(set(params.names()) - set(grads))
        raise KeyError(f"gradients misaligned with parameters: missing {missing[:3]}, unknown {extra[:3]}")
    t = params.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        slots = params.state.get(name)
        if slots is None:
            slots = params.state[name] = {"m": np.zeros(p.shape, p.dtype), "v": np.zeros(p.shape, p.dtype)}
        m, v = slots["m"], slots["v"]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        params.assign(name, p.data - lr * update)
    params.step = t
