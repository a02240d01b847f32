"""Binary checkpoints.

Layout (all integers little-endian)::

    b"MXIM" | u32 version | 32-byte config digest | u32 count | entries
    [u32 has_optimizer | u64 step | u32 count | entries]

and each entry is ``u32 name length | UTF-8 name | u32 rank | u64 extents[rank]
| float32 values``. Optimizer entries are named ``<slot>:<parameter>``.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from .autodiff import ParamStore, Tensor

MAGIC = b"MXIM"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_entries(buf: io.BytesIO, entries: list[tuple[str, np.ndarray]]) -> None:
    buf.write(struct.pack("<I", len(entries)))
    for name, arr in entries:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def entries(self) -> list[tuple[str, np.ndarray]]:
        (count,) = self.unpack("<I")
        out = []
        for _ in range(count):
            (length,) = self.unpack("<I")
            name = self.take(length).decode("utf-8")
            (rank,) = self.unpack("<I")
            shape = self.unpack(f"<{rank}Q") if rank else ()
            size = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(self.take(4 * size), dtype="<f4").astype(np.float32).reshape(shape)
            out.append((name, values))
        return out


def dumps(params: ParamStore, digest: bytes, include_optimizer: bool = True) -> bytes:
    if len(digest) != 32:
        raise ValueError("config digest must be 32 bytes")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(digest)
    _write_entries(buf, [(n, t.data) for n, t in params.items()])
    if include_optimizer and params.state:
        buf.write(struct.pack("<IQ", 1, params.step))
        slots = [(f"{slot}:{n}", arr) for n, st in params.state.items() for slot, arr in st.items()]
        _write_entries(buf, slots)
    else:
        buf.write(struct.pack("<I", 0))
    return buf.getvalue()


def loads(blob: bytes, params: ParamStore, digest: bytes) -> ParamStore:
    """Load values into ``params`` (names and shapes must match); returns it."""
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if r.take(32) != digest:
        raise CheckpointError("checkpoint was written for a different model configuration")
    entries = r.entries()
    names = [n for n, _ in entries]
    if names != params.names():
        raise CheckpointError("checkpoint parameter names do not match the model")
    for name, values in entries:
        if values.shape != params[name].shape:
            raise CheckpointError(f"{name}: stored shape {values.shape} != model shape {params[name].shape}")
        params[name] = Tensor(values, requires_grad=True, dtype=np.float32)
    params.state, params.step = {}, 0
    if r.pos < len(blob):
        (flag,) = r.unpack("<I")
        if flag:
            (params.step,) = r.unpack("<Q")
            for key, values in r.entries():
                slot, _, name = key.partition(":")
                if name not in params:
                    raise CheckpointError(f"optimizer state for unknown parameter {name!r}")
                params.state.setdefault(name, {})[slot] = values.copy()
    if r.pos != len(blob):
        raise CheckpointError("trailing bytes after checkpoint")
    return params


def save(path: str | os.PathLike, params: ParamStore, digest: bytes, include_optimizer: bool = True) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(dumps(params, digest, include_optimizer))
    os.replace(tmp, path)


def load(path: str | os.PathLike, params: ParamStore, digest: bytes) -> ParamStore:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e.strerror}") from None
    return loads(blob, params, digest)
