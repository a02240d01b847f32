"""Parameter-owning modules on top of the autodiff primitives.

A module declares parameter *specs* (shape + initialiser) at construction and
reads live tensors from a bound :class:`~maxim.autodiff.ParamStore` at call
time. Names are hierarchical, built from attribute names:
``stage0/enc1/mab0/local/sgu_proj/w``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore, Tensor, ops
from .autodiff.tensor import active_recorder, default_dtype

Init = Callable[[np.random.Generator, tuple], np.ndarray]


def zeros(rng, shape):
    return np.zeros(shape)


def ones(rng, shape):
    return np.ones(shape)


def normal(std: float) -> Init:
    def init(rng, shape):
        return rng.normal(0.0, std, size=shape)

    return init


def lecun_normal(fan_in: int) -> Init:
    return normal(1.0 / math.sqrt(fan_in))


@dataclass(frozen=True)
class ParamSpec:
    shape: tuple[int, ...]
    init: Init

    @property
    def size(self) -> int:
        return math.prod(self.shape)


class Module:
    def __init__(self):
        object.__setattr__(self, "_specs", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_store", None)
        object.__setattr__(self, "_path", "")

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def param(self, name: str, shape, init: Init) -> None:
        self._specs[name] = ParamSpec(tuple(int(s) for s in shape), init)

    def named_param_specs(self, prefix: str = "") -> Iterator[tuple[str, ParamSpec]]:
        for name, spec in self._specs.items():
            yield prefix + name, spec
        for cname, child in self._children.items():
            yield from child.named_param_specs(f"{prefix}{cname}/")

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix.rstrip("/"), self
        for cname, child in self._children.items():
            yield from child.named_modules(f"{prefix}{cname}/")

    def own_param_count(self) -> int:
        return sum(spec.size for spec in self._specs.values())

    def num_params(self) -> int:
        return sum(spec.size for _, spec in self.named_param_specs())

    def bind(self, store: ParamStore, path: str = "") -> Module:
        object.__setattr__(self, "_store", store)
        object.__setattr__(self, "_path", path)
        for cname, child in self._children.items():
            child.bind(store, f"{path}{cname}/")
        return self

    def p(self, name: str) -> Tensor:
        if self._store is None:
            raise RuntimeError(f"{type(self).__name__} is not bound to a ParamStore")
        return self._store[self._path + name]

    def __call__(self, *args, **kwargs):
        rec = active_recorder()
        if rec is None:
            return self.forward(*args, **kwargs)
        with rec.scope(self._path.rstrip("/")):
            return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def init_params(model: Module, seed: int = 0, dtype=None) -> ParamStore:
    """Draw every parameter in declaration order from one seeded generator."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype or default_dtype())
    store = ParamStore()
    for name, spec in model.named_param_specs():
        store.add(name, Tensor(spec.init(rng, spec.shape), requires_grad=True, dtype=dtype))
    return store


def meta_params(model: Module) -> ParamStore:
    store = ParamStore()
    for name, spec in model.named_param_specs():
        store.add(name, Tensor.meta(spec.shape, requires_grad=True))
    return store


class Dense(Module):
    def __init__(self, cin: int, cout: int, bias: bool = True, std: float = 0.02):
        super().__init__()
        self.cin, self.cout, self.bias = cin, cout, bias
        self.param("w", (cin, cout), normal(std))
        if bias:
            self.param("b", (cout,), zeros)

    def forward(self, x: Tensor, parts: int = 1):
        """With ``parts > 1``, returns the output's equal channel chunks as separate tensors.

        Each chunk comes from the matching column block of the weight, which
        avoids materialising and then slicing the full output.
        """
        w, b = self.p("w"), self.p("b") if self.bias else None
        if parts == 1:
            return ops.dense(x, w, b)
        if self.cout % parts:
            raise ValueError(f"{self.cout} outputs do not split into {parts} parts")
        ws, bs = ops.split(w, parts, axis=-1), ops.split(b, parts) if b is not None else [None] * parts
        return [ops.dense(x, wi, bi) for wi, bi in zip(ws, bs)]


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int = 3, stride: int = 1, bias: bool = True, init: Init | None = None):
        super().__init__()
        self.cin, self.cout, self.kernel, self.stride, self.bias = cin, cout, kernel, stride, bias
        self.param("k", (kernel, kernel, cin, cout), init or lecun_normal(kernel * kernel * cin))
        if bias:
            self.param("b", (cout,), zeros)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.p("k"), self.p("b") if self.bias else None, stride=self.stride)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.param("gamma", (channels,), ones)
        self.param("beta", (channels,), zeros)

    def forward(self, x: Tensor) -> Tensor:
        return ops.layernorm(x, self.p("gamma"), self.p("beta"), self.eps)


class SpatialProjection(Module):
    """Learned ``L_out x L_in`` matrix applied along one token axis.

    Near-identity gating init: tiny weights, unit bias.
    """

    def __init__(self, length: int, length_out: int | None = None, bias_init: Init = ones, std: float | None = None):
        super().__init__()
        lout = length if length_out is None else length_out
        self.length = length
        self.param("w", (lout, length), normal(1e-3 / length if std is None else std))
        self.param("b", (lout,), bias_init)

    def forward(self, x: Tensor, axis: int) -> Tensor:
        return ops.axis_linear(x, self.p("w"), self.p("b"), axis=axis)
