"""Static parameter and FLOP accounting by walking the model on shape-only tensors.

Convention: one multiply-accumulate is 2 FLOPs; every other arithmetic
operation counts once with the per-op weights fixed in :mod:`maxim.autodiff.ops`.
The MAC = 1 total (``macs + ops``) is reported alongside.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .autodiff import CostRecorder, Tensor, recording_costs
from .nn import Module, meta_params


@dataclass(frozen=True)
class CostRow:
    name: str
    params: int
    macs: int
    ops: int

    @property
    def flops(self) -> int:
        return 2 * self.macs + self.ops

    @property
    def flops_mac1(self) -> int:
        return self.macs + self.ops


@dataclass(frozen=True)
class CostReport:
    rows: tuple[CostRow, ...]
    height: int
    width: int
    channels: int

    @property
    def params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def ops(self) -> int:
        return sum(r.ops for r in self.rows)

    @property
    def flops(self) -> int:
        return 2 * self.macs + self.ops

    @property
    def flops_mac1(self) -> int:
        return self.macs + self.ops

    def row(self, name: str) -> CostRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_text(self) -> str:
        width = max([len(r.name) for r in self.rows] + [5])
        lines = [f"{'layer':<{width}}  {'params':>12}  {'flops':>16}"]
        lines += [f"{r.name:<{width}}  {r.params:>12,}  {r.flops:>16,}" for r in self.rows]
        lines.append(f"{'total':<{width}}  {self.params:>12,}  {self.flops:>16,}")
        lines.append(
            f"input {self.height}x{self.width}x{self.channels}: {self.params / 1e6:.2f}M params, "
            f"{self.flops / 1e9:.1f}G FLOPs (MAC=2), {self.flops_mac1 / 1e9:.1f}G FLOPs (MAC=1)"
        )
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "params", "flops"])
        for r in self.rows:
            writer.writerow([r.name, r.params, r.flops])
        writer.writerow(["total", self.params, self.flops])
        return buf.getvalue()


def count_module(module: Module, *input_shapes: tuple[int, ...]) -> CostReport:
    """Cost of ``module(*inputs)`` with meta inputs of the given shapes."""
    store = meta_params(module)
    module.bind(store)
    recorder = CostRecorder()
    with recording_costs(recorder):
        module(*(Tensor.meta(s) for s in input_shapes))
    rows = []
    seen = set()
    for path, mod in module.named_modules():
        macs, ops = recorder.rows.get(path, (0, 0))
        params = mod.own_param_count()
        seen.add(path)
        if params or macs or ops:
            rows.append(CostRow(path or "(root)", params, macs, ops))
    for path, (macs, ops) in recorder.rows.items():
        if path not in seen:
            rows.append(CostRow(path or "(root)", 0, macs, ops))
    shape = input_shapes[0]
    return CostReport(tuple(rows), shape[1], shape[2], shape[3])


def count_model(cfg, height: int, width: int) -> CostReport:
    from .multistage import Restorer

    div = cfg.divisor
    if height <= 0 or width <= 0 or height % div or width % div:
        raise ValueError(f"extents ({height}, {width}) must be positive multiples of {div}")
    return count_module(Restorer(cfg), (1, height, width, 3))
