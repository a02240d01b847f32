"""Named parameter storage and the parameter-level backward pass."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from .tensor import Graph, Tensor


class ParamStore:
    """Insertion-ordered map from hierarchical names to parameter tensors.

    Tensors are immutable, so an optimizer step *replaces* entries. Each entry
    may also own optimizer state slots (``store.state[name]["m"]`` ...).
    """

    def __init__(self):
        self._entries: dict[str, Tensor] = {}
        self.state: dict[str, dict[str, np.ndarray]] = {}
        self.step = 0

    def add(self, name: str, value: Tensor) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._entries[name] = value
        return value

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __setitem__(self, name: str, value: Tensor) -> None:
        if name not in self._entries:
            raise KeyError(f"unknown parameter {name!r}; use add() to register")
        if value.shape != self._entries[name].shape:
            raise ValueError(f"{name}: shape {value.shape} != {self._entries[name].shape}")
        self._entries[name] = value

    def assign(self, name: str, values: np.ndarray) -> None:
        """Replace ``name`` with a fresh trainable tensor holding ``values``."""
        self[name] = Tensor(values, requires_grad=True, dtype=self._entries[name].dtype)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def values(self):
        return self._entries.values()

    def num_values(self) -> int:
        return sum(t.size for t in self._entries.values())

    def astype(self, dtype) -> ParamStore:
        out = ParamStore()
        for name, t in self._entries.items():
            if t.is_meta:
                out.add(name, Tensor.meta(t.shape, dtype, requires_grad=True))
            else:
                out.add(name, Tensor(t.data, requires_grad=True, dtype=dtype))
        return out

    def copy(self) -> ParamStore:
        out = ParamStore()
        for name, t in self._entries.items():
            out._entries[name] = t
        out.state = {k: {s: v.copy() for s, v in slots.items()} for k, slots in self.state.items()}
        out.step = self.step
        return out


def backward(loss: Tensor, params: ParamStore) -> dict[str, np.ndarray]:
    """Gradient of a scalar ``loss`` for every parameter; unreached ones get zeros."""
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss is not recorded on a graph reaching any parameter")
    grads = Graph(loss).backward()
    out = {}
    for name, t in params.items():
        g = grads.get(id(t))
        out[name] = np.zeros(t.shape, dtype=t.dtype) if g is None else np.asarray(g, dtype=t.dtype)
    return out
