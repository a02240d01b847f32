import csv
import io

import pytest

from maxim.cost import count_model, count_module
from maxim.mixers import KINDS
from maxim.multistage import Restorer, preset
from maxim.nn import init_params


@pytest.fixture(scope="module")
def tiny_pair():
    cfg = preset("tiny")
    return count_model(cfg, 64, 64), count_model(cfg, 128, 64)


@pytest.mark.parametrize("name", ["tiny", "maxim-1s"])
def test_counted_params_equal_instantiated_store(name):
    cfg = preset(name)
    model = Restorer(cfg)
    assert count_model(cfg, 64, 64).params == init_params(model, 0).num_values() == model.num_params()


def test_totals_are_column_sums(tiny_pair):
    rep = tiny_pair[0]
    assert rep.params == sum(r.params for r in rep.rows)
    assert rep.flops == sum(r.flops for r in rep.rows)
    assert rep.flops_mac1 == sum(r.flops_mac1 for r in rep.rows)
    assert rep.flops == 2 * rep.macs + rep.ops


def test_csv_report(tiny_pair):
    rep = tiny_pair[0]
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["name", "params", "flops"]
    assert rows[-1] == ["total", str(rep.params), str(rep.flops)]
    assert sum(int(r[2]) for r in rows[1:-1]) == rep.flops
    assert len(rows) == len(rep.rows) + 2


def test_text_report_footer(tiny_pair):
    footer = tiny_pair[0].to_text().splitlines()[-1]
    assert "MAC=2" in footer and "MAC=1" in footer and "64x64x3" in footer


def test_doubling_height_doubles_spatial_rows(tiny_pair):
    small, tall = tiny_pair
    assert small.params == tall.params
    assert [r.name for r in small.rows] == [r.name for r in tall.rows]
    for a, b in zip(small.rows, tall.rows):
        if a.name.endswith(("/se/squeeze", "/se/excite")):
            # these act on one pooled vector per image
            assert b.flops == a.flops
        elif a.name.endswith("/se"):
            # pooling and gating scale with the image, the pooled constants do not
            assert 2 * a.flops > b.flops > a.flops
        else:
            assert b.flops == 2 * a.flops, a.name


def test_count_is_deterministic():
    cfg = preset("tiny")
    assert count_model(cfg, 64, 64) == count_model(cfg, 64, 64)


def test_invalid_extents():
    with pytest.raises(ValueError):
        count_model(preset("maxim-1s"), 100, 64)
    with pytest.raises(ValueError):
        count_model(preset("maxim-1s"), 0, 64)


@pytest.mark.parametrize(
    "name,params,gflops",
    [("maxim-1s", 6.1e6, None), ("maxim-2s", 14.1e6, 216.0), ("maxim-3s", 22.2e6, 339.2)],
)
def test_published_model_sizes(name, params, gflops):
    rep = count_model(preset(name), 256, 256)
    assert abs(rep.params / params - 1) <= 0.15
    if gflops is not None:
        assert abs(rep.flops / 1e9 / gflops - 1) <= 0.20


def test_mixer_parameter_ordering_at_full_size():
    counts = {k: count_model(preset("maxim-1s", k), 64, 64).params for k in KINDS}
    assert counts["fft"] < counts["mlp"] < counts["gmlp"]


def test_count_module_names_rows_by_path():
    from maxim.blocks import ResidualChannelAttention

    rep = count_module(ResidualChannelAttention(8), (1, 8, 8, 8))
    names = {r.name for r in rep.rows}
    assert {"conv1", "conv2", "se/squeeze", "se/excite"} <= names
    assert rep.row("conv1").params == 3 * 3 * 8 * 8 + 8
    assert rep.row("conv1").macs == 64 * 9 * 8 * 8
    with pytest.raises(KeyError):
        rep.row("missing")
