"""Tensor values, recording modes and the reverse-mode engine.

A :class:`Tensor` wraps a read-only numpy array. Primitives in
:mod:`maxim.autodiff.ops` build new tensors and, when gradients are being
recorded, attach the parents and a backward rule. :class:`Graph` orders the
recorded nodes topologically and runs the rules in reverse.

Tensors may also be *meta* tensors: a shape without storage. Primitives
propagate shapes through meta tensors and report their cost to the active
:class:`CostRecorder`, which is how the static cost analyser walks a model
without allocating feature maps.
"""

from __future__ import annotations

import contextlib
import math
from collections.abc import Callable, Iterator, Sequence

import numpy as np

_state = {
    "dtype": np.dtype(np.float32),
    "grad": True,
    "check_finite": True,
    "recorder": None,
}


def default_dtype() -> np.dtype:
    return _state["dtype"]


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Temporarily switch the default float type (use float64 for verification)."""
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = prev


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


def grad_enabled() -> bool:
    return _state["grad"]


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


def check_finite(arr: np.ndarray, op: str) -> None:
    if not _state["check_finite"] or arr.size == 0:
        return
    flat = arr.reshape(-1)
    # one dot product is ~2x cheaper than isfinite().all() and catches nan/inf
    with np.errstate(over="ignore", invalid="ignore"):
        probe = flat @ flat
    if not math.isfinite(float(probe)):
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """Immutable n-d array, optionally a node of a computation graph."""

    __slots__ = ("data", "shape", "dtype", "requires_grad", "parents", "backward_fn", "op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, *, dtype=None, _op: str = "leaf"):
        arr = np.array(data, dtype=dtype or default_dtype(), copy=True, order="C")
        check_finite(arr, _op)
        arr.flags.writeable = False
        self.data = arr
        self.shape = arr.shape
        self.dtype = arr.dtype
        self.requires_grad = bool(requires_grad)
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.op = _op

    @classmethod
    def _wrap(cls, arr: np.ndarray, op: str) -> Tensor:
        # internal fast path: arr is freshly computed and owned by the new tensor
        t = cls.__new__(cls)
        if type(arr) is not np.ndarray:
            arr = np.array(arr)
        elif not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        check_finite(arr, op)
        arr.flags.writeable = False
        t.data = arr
        t.shape = arr.shape
        t.dtype = arr.dtype
        t.requires_grad = False
        t.parents = ()
        t.backward_fn = None
        t.op = op
        return t

    @classmethod
    def meta(cls, shape: Sequence[int], dtype=None, requires_grad: bool = False) -> Tensor:
        """A storage-less tensor that only carries its shape."""
        t = cls.__new__(cls)
        t.data = None
        t.shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in t.shape):
            raise ValueError(f"extents must be positive, got {t.shape}")
        t.dtype = np.dtype(dtype or default_dtype())
        t.requires_grad = requires_grad
        t.parents = ()
        t.backward_fn = None
        t.op = "meta"
        return t

    @property
    def is_meta(self) -> bool:
        return self.data is None

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def numpy(self) -> np.ndarray:
        if self.data is None:
            raise ValueError("meta tensor has no values")
        return self.data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() needs a single value, shape is {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        if self.is_meta:
            return Tensor.meta(self.shape, self.dtype)
        t = Tensor.__new__(Tensor)
        t.data, t.shape, t.dtype = self.data, self.shape, self.dtype
        t.requires_grad, t.parents, t.backward_fn, t.op = False, (), None, "detach"
        return t

    def __repr__(self) -> str:
        kind = "meta" if self.is_meta else self.dtype.name
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, {kind}{flag}, op={self.op})"

    # arithmetic sugar; rules live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    # the graph keys on identity; equality stays identity as well
    __hash__ = object.__hash__


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def make_node(arr: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Wrap a primitive's result, recording it if any parent needs a gradient."""
    out = Tensor._wrap(arr, op)
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward
    return out


# ---------------------------------------------------------------- cost hooks


class CostRecorder:
    """Accumulates multiply-accumulates and other arithmetic per module scope."""

    def __init__(self):
        self.scopes: list[str] = [""]
        self.rows: dict[str, list[int]] = {}

    @contextlib.contextmanager
    def scope(self, name: str) -> Iterator[None]:
        self.scopes.append(name)
        try:
            yield
        finally:
            self.scopes.pop()

    def add(self, macs: int, ops: int) -> None:
        row = self.rows.setdefault(self.scopes[-1], [0, 0])
        row[0] += int(macs)
        row[1] += int(ops)


@contextlib.contextmanager
def recording_costs(recorder: CostRecorder) -> Iterator[CostRecorder]:
    prev = _state["recorder"]
    _state["recorder"] = recorder
    try:
        yield recorder
    finally:
        _state["recorder"] = prev


def active_recorder() -> CostRecorder | None:
    return _state["recorder"]


def count(macs: int = 0, ops: int = 0) -> None:
    rec = _state["recorder"]
    if rec is not None:
        rec.add(macs, ops)


# ------------------------------------------------------------------- engine


class Graph:
    """The recorded primitive applications reaching ``output``, in topological order."""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        # iterative post-order DFS; recursion would overflow on deep models
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node.parents):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    def backward(self, seed: np.ndarray | None = None) -> dict[int, np.ndarray]:
        """Propagate ``seed`` (default 1) from the output; returns grads keyed by ``id``."""
        out = self.output
        if seed is None:
            seed = np.ones(out.shape, dtype=out.dtype)
        grads: dict[int, np.ndarray] = {id(out): np.asarray(seed, dtype=out.dtype)}
        for node in reversed(self.nodes):
            g = grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            if node is not out:
                # intermediate grads are dead once consumed
                del grads[id(node)]
        return grads


def grad(output: Tensor, inputs: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``output`` with respect to ``inputs`` (zeros when unreachable)."""
    if output.size != 1:
        raise ValueError(f"gradient target must be a scalar, got shape {output.shape}")
    if not output.requires_grad:
        raise ValueError("output was not recorded on a graph (no input requires grad)")
    result = Graph(output).backward()
    return [result.get(id(t), np.zeros(t.shape, dtype=t.dtype)) for t in inputs]
