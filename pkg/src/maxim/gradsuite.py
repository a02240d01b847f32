"""Finite-difference gradient suites for primitives, blocks and a micro model.

Every case reduces its output with a fixed random projection (a plain sum
would hide errors in shift-invariant layers such as LayerNorm) and is checked
in 64-bit mode against a relative-error threshold.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore, Tensor, grad_check, ops, precision
from .backbone import StageConfig
from .blocks import CrossGatingBlock, MultiAxisBlock, ResidualChannelAttention, SupervisedAttention
from .mixers import KINDS
from .multistage import ModelConfig, Restorer, freq_loss, total_loss
from .nn import Module, init_params

PRIMITIVE_TOL = 1e-6
BLOCK_TOL = 1e-4
STAGE_TOL = 1e-3


@dataclass(frozen=True)
class Case:
    suite: str
    name: str
    tol: float
    run: Callable[[], float]


@dataclass(frozen=True)
class Outcome:
    suite: str
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.error < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite:<10} {self.name:<22} max_rel_err={self.error:.3e} (< {self.tol:.0e})"


def _projected(out: Tensor, seed: int) -> Tensor:
    r = np.random.default_rng(seed).standard_normal(out.shape)
    return ops.sum(ops.mul(out, Tensor(r, dtype=out.dtype)))


def _rand(rng, *shape, scale=1.0):
    return rng.standard_normal(shape) * scale


# ---------------------------------------------------------------- primitives


def _primitive_cases() -> list[Case]:
    rng = np.random.default_rng(1)
    x = _rand(rng, 2, 4, 4, 3)
    y = _rand(rng, 2, 4, 4, 3)
    pos = rng.uniform(0.5, 2.0, size=(2, 4, 4, 3))
    specs: list[tuple[str, Callable, list[np.ndarray]]] = [
        ("add", lambda a, b: ops.add(a, b), [x, y]),
        ("sub", lambda a, b: ops.sub(a, b), [x, y]),
        ("mul", lambda a, b: ops.mul(a, b), [x, y]),
        ("div", lambda a, b: ops.div(a, b), [x, pos]),
        ("broadcast_mul", lambda a, b: ops.mul(a, b), [x, _rand(rng, 2, 1, 1, 3)]),
        ("neg", ops.neg, [x]),
        ("square", ops.square, [x]),
        ("sqrt", ops.sqrt, [pos]),
        ("exp", ops.exp, [x]),
        ("mean", lambda a: ops.mean(a, axis=(1, 2), keepdims=True), [x]),
        ("dense", lambda a, w, b: ops.dense(a, w, b), [x, _rand(rng, 3, 5), _rand(rng, 5)]),
        ("axis_linear", lambda a, w, b: ops.axis_linear(a, w, b, axis=2), [x, _rand(rng, 4, 4), _rand(rng, 4)]),
        ("matmul", lambda a, b: ops.matmul(a, b), [_rand(rng, 2, 3, 4), _rand(rng, 2, 4, 5)]),
        ("layernorm", lambda a, g, b: ops.layernorm(a, g, b), [x, _rand(rng, 3), _rand(rng, 3)]),
        ("gelu", ops.gelu, [x]),
        ("leaky_relu", lambda a: ops.leaky_relu(a, 0.2), [x + 0.05 * np.sign(x)]),
        ("sigmoid", ops.sigmoid, [x]),
        ("softmax", lambda a: ops.softmax(a, axis=-1), [x]),
        ("transpose", lambda a: ops.transpose(a, (0, 2, 1, 3)), [x]),
        ("reshape", lambda a: ops.reshape(a, (2, 16, 3)), [x]),
        ("concat", lambda a, b: ops.concat([a, b], axis=-1), [x, y]),
        ("slice", lambda a: ops.slice_axis(a, 1, 3, axis=1), [x]),
        ("pad_reflect", lambda a: ops.pad2d(a, 1, 2, 2, 1, "reflect"), [x]),
        ("conv3x3", lambda a, k, b: ops.conv2d(a, k, b), [x, _rand(rng, 3, 3, 3, 4, scale=0.5), _rand(rng, 4)]),
        ("conv3x3_s2", lambda a, k: ops.conv2d(a, k, stride=2), [x, _rand(rng, 3, 3, 3, 2, scale=0.5)]),
        ("upsample_nearest", lambda a: ops.upsample_nearest(a, 2), [x]),
        ("resize_bilinear", lambda a: ops.resize(a, (2, 2), "bilinear"), [x]),
        ("resize_bilinear_up", lambda a: ops.resize(a, (6, 7), "bilinear"), [x]),
        ("resize_nearest", lambda a: ops.resize(a, (2, 2), "nearest"), [x]),
        ("rfft2_l1diff", ops.rfft2_l1diff, [x, y]),
    ]
    cases = []
    for k, (name, fn, arrays) in enumerate(specs):

        def run(fn=fn, arrays=arrays, k=k):
            def f(*ts):
                out = fn(*ts)
                return out if out.size == 1 else _projected(out, 100 + k)

            return grad_check(f, arrays)

        cases.append(Case("primitive", name, PRIMITIVE_TOL, run))
    return cases


# -------------------------------------------------------------------- blocks


def module_case(
    suite: str,
    name: str,
    module: Module,
    input_shapes: list[tuple[int, ...]],
    tol: float,
    *,
    reduce: Callable | None = None,
    max_coords: int = 160,
    seed: int = 0,
    param_noise: float = 0.1,
    h: float = 1e-5,
) -> Case:
    """Check gradients wrt the inputs and every parameter (a seeded coordinate subset)."""

    def run() -> float:
        with precision(np.float64):
            store = init_params(module, seed, dtype=np.float64)
        names = store.names()
        rng = np.random.default_rng(seed + 1)
        # perturb parameters away from their structured initial values (zeros/ones)
        arrays = [rng.standard_normal(s) * 0.5 for s in input_shapes]
        arrays += [store[n].data + rng.standard_normal(store[n].shape) * param_noise for n in names]
        n_in = len(input_shapes)

        def f(*ts):
            local = ParamStore()
            for n, t in zip(names, ts[n_in:]):
                local.add(n, t)
            module.bind(local)
            out = module(*ts[:n_in])
            if reduce is not None:
                return reduce(out, ts[:n_in])
            out = out[0] if isinstance(out, tuple) else out
            return _projected(out, seed + 2)

        return grad_check(f, arrays, h, max_coords=max_coords, seed=seed)

    return Case(suite, name, tol, run)


def _sum_both(out, _inputs):
    a, b = out
    total = _projected(a, 7)
    return total if b is None else ops.add(total, _projected(b, 8))


def _block_cases() -> list[Case]:
    return [
        module_case("block", "mab", MultiAxisBlock(4, 4, 4), [(1, 8, 8, 4)], BLOCK_TOL),
        module_case(
            "block", "cgb", CrossGatingBlock(4, 6, 4, 4, 2), [(1, 8, 8, 4), (1, 8, 8, 6)], BLOCK_TOL, reduce=_sum_both
        ),
        module_case("block", "rcab", ResidualChannelAttention(4), [(2, 6, 6, 4)], BLOCK_TOL),
        module_case(
            "block", "sam", SupervisedAttention(4), [(1, 6, 6, 4), (1, 6, 6, 3)], BLOCK_TOL, reduce=_sum_both
        ),
    ]


def mixer_cases() -> list[Case]:
    return [
        module_case("mixer", f"mab_{kind}", MultiAxisBlock(4, 4, 2, mixer=kind), [(1, 8, 8, 4)], BLOCK_TOL)
        for kind in KINDS
    ]


# --------------------------------------------------------------- micro model

MICRO_STAGE = StageConfig(
    c0=4,
    depth=2,
    block_sizes=(4, 2),
    grid_sizes=(2, 2),
    bottleneck_sizes=((2, 2),),
    bottleneck_mult=2,
    groups=1,
)


def micro_config(stages: int = 2) -> ModelConfig:
    return ModelConfig(stages=stages, scales=2, stage=MICRO_STAGE)


def _stage_case() -> Case:
    cfg = micro_config()
    model = Restorer(cfg)
    h = cfg.divisor
    target = np.random.default_rng(5).uniform(0, 1, size=(1, h, h, 3))

    def reduce(out, _inputs):
        return total_loss(out, Tensor(target, dtype=np.float64), cfg)

    # Near-initial weights leave some deep gradients at ~1e-9, which a central
    # difference cannot resolve against a unit-scale loss; larger weights blow
    # the loss up and roundoff dominates again. This setting sits between.
    return module_case(
        "stage",
        "micro_2stage",
        model,
        [(1, h, h, 3)],
        STAGE_TOL,
        reduce=reduce,
        max_coords=200,
        param_noise=0.2,
        h=1e-4,
    )


def loss_cases() -> list[Case]:
    rng = np.random.default_rng(3)
    t = rng.uniform(0, 1, size=(1, 4, 4, 3))

    def charb(p):
        from .multistage import charbonnier

        return charbonnier(p, Tensor(t, dtype=np.float64))

    return [
        Case("primitive", "charbonnier", PRIMITIVE_TOL, lambda: grad_check(charb, rng.uniform(0, 1, size=t.shape))),
        Case(
            "primitive",
            "freq_loss",
            PRIMITIVE_TOL,
            lambda: grad_check(lambda p: freq_loss(p, Tensor(t, dtype=np.float64)), rng.uniform(0, 1, size=t.shape)),
        ),
    ]


SUITES = {
    "primitives": lambda: _primitive_cases() + loss_cases(),
    "mab": lambda: [c for c in _block_cases() if c.name == "mab"],
    "cgb": lambda: [c for c in _block_cases() if c.name == "cgb"],
    "rcab": lambda: [c for c in _block_cases() if c.name == "rcab"],
    "sam": lambda: [c for c in _block_cases() if c.name == "sam"],
    "mixers": mixer_cases,
    "stage": lambda: [_stage_case()],
}


def cases(block: str | None = None) -> list[Case]:
    """All cases, or only those of one suite (``mab``, ``cgb``, ``rcab``, ``sam``, ``stage`` ...)."""
    if block is None:
        return [c for make in SUITES.values() for c in make()]
    if block not in SUITES:
        raise KeyError(f"unknown suite {block!r}; expected one of {sorted(SUITES)}")
    return SUITES[block]()


def run(block: str | None = None) -> Iterator[Outcome]:
    for case in cases(block):
        yield Outcome(case.suite, case.name, case.run(), case.tol)
