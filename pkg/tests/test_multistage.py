from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxim.autodiff import Tensor, backward, grad, ops, precision
from maxim.backbone import TINY
from maxim.multistage import (
    ModelConfig,
    Restorer,
    StageOutputs,
    charbonnier,
    freq_loss,
    image_pyramid,
    preset,
    target_pyramid,
    total_loss,
)
from maxim.nn import init_params
from maxim.optim import adam_step

from .conftest import t64


def f64_model(cfg: ModelConfig, seed=0, noise=0.0):
    model = Restorer(cfg)
    store = init_params(model, seed, dtype=np.float64)
    if noise:
        r = np.random.default_rng(seed + 100)
        for name in store.names():
            store.assign(name, store[name].data + r.standard_normal(store[name].shape) * noise)
    model.bind(store)
    return model, store


def images(n=1, size=32, seed=0):
    r = np.random.default_rng(seed)
    return r.uniform(size=(n, size, size, 3)), r.uniform(size=(n, size, size, 3))


# ----------------------------------------------------------------- losses


def test_charbonnier_examples():
    a = t64(np.full((1, 2, 2, 3), 0.5))
    assert charbonnier(a, t64(np.full((1, 2, 2, 3), 0.2))).item() == pytest.approx(0.3000017, abs=1e-7)
    assert charbonnier(a, a).item() == pytest.approx(1e-3, rel=1e-12)
    off = t64(np.full((1, 2, 2, 3), 0.503))
    assert charbonnier(off, a).item() == pytest.approx(3.1623e-3, abs=1e-7)


def test_charbonnier_gradient_vanishes_at_match():
    a = t64(np.random.default_rng(0).uniform(size=(1, 3, 3, 3)), grad=True)
    (g,) = grad(charbonnier(a, t64(a.data)), [a])
    assert np.array_equal(g, np.zeros_like(g))


def test_freq_loss_examples():
    a = t64(np.zeros((1, 4, 4, 3)))
    assert freq_loss(a, a).item() == 0.0
    shifted = t64(np.full((1, 4, 4, 3), 0.25))
    # a constant offset only touches the DC bin, which holds 16 * 0.25 per channel
    assert freq_loss(shifted, a).item() == pytest.approx(3 * 16 * 0.25 / (16 * 3), rel=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(ValueError):
        charbonnier(t64(np.ones((1, 2, 2, 3))), t64(np.ones((1, 2, 4, 3))))
    with pytest.raises(ValueError):
        freq_loss(t64(np.ones((1, 2, 2, 3))), t64(np.ones((1, 2, 4, 3))))


def _outputs_equal_to(target: np.ndarray, stages: int, scales: int) -> StageOutputs:
    pyr = target_pyramid(t64(target), scales)
    return StageOutputs([list(pyr) for _ in range(stages)], [None] * stages)


@pytest.mark.parametrize("stages,scales", [(1, 1), (1, 3), (3, 3), (2, 2)])
def test_total_loss_at_perfect_restoration(stages, scales):
    target = np.random.default_rng(1).uniform(size=(2, 16, 16, 3))
    cfg = ModelConfig(stages=stages, scales=scales, stage=TINY)
    loss = total_loss(_outputs_equal_to(target, stages, scales), t64(target), cfg)
    assert abs(loss.item() - stages * scales * 1e-3) <= 1e-9


def test_zero_frequency_weight_is_pure_charbonnier(rng):
    pred, target = rng.uniform(size=(1, 8, 8, 3)), rng.uniform(size=(1, 8, 8, 3))
    cfg = ModelConfig(scales=1, freq_weight=0.0, stage=TINY)
    out = StageOutputs([[t64(pred)]], [None])
    assert total_loss(out, t64(target), cfg).item() == charbonnier(t64(pred), t64(target)).item()


def test_total_loss_single_pixel_example():
    cfg = ModelConfig(scales=1, stage=TINY)
    out = StageOutputs([[t64(np.full((1, 1, 1, 3), 0.5))]], [None])
    loss = total_loss(out, t64(np.full((1, 1, 1, 3), 0.2)), cfg).item()
    assert loss == pytest.approx(0.3000017 + 0.1 * 0.3, abs=1e-7)


def test_l2_mode_uses_mean_squared_error(rng):
    pred, target = rng.uniform(size=(1, 8, 8, 3)), rng.uniform(size=(1, 8, 8, 3))
    cfg = ModelConfig(scales=1, loss="l2", stage=TINY)
    out = StageOutputs([[t64(pred)]], [None])
    assert total_loss(out, t64(target), cfg).item() == pytest.approx(np.mean((pred - target) ** 2), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), stages=st.integers(1, 3), scales=st.integers(1, 3))
def test_total_loss_floor(seed, stages, scales):
    r = np.random.default_rng(seed)
    target = r.uniform(size=(1, 8, 8, 3))
    pyr = [t64(r.uniform(size=(1, 8 >> n, 8 >> n, 3))) for n in range(scales)]
    out = StageOutputs([pyr] * stages, [None] * stages)
    loss = total_loss(out, t64(target), ModelConfig(stages=stages, scales=scales, stage=TINY)).item()
    assert loss >= stages * scales * 1e-3 * (1 - 1e-12)


def test_total_loss_invariant_to_batch_permutation(rng):
    pred, target = rng.uniform(size=(4, 8, 8, 3)), rng.uniform(size=(4, 8, 8, 3))
    cfg = ModelConfig(scales=2, stage=TINY)

    def loss(order):
        out = StageOutputs([image_pyramid(t64(pred[order]), 2)], [None])
        return total_loss(out, t64(target[order]), cfg).item()

    assert loss([2, 0, 3, 1]) == pytest.approx(loss([0, 1, 2, 3]), rel=1e-13)


def test_pyramids():
    img = t64(np.arange(64.0).reshape(1, 8, 8, 1))
    assert [p.shape for p in image_pyramid(img, 3)] == [(1, 8, 8, 1), (1, 4, 4, 1), (1, 2, 2, 1)]
    coarse = target_pyramid(img, 2)[1].data
    np.testing.assert_allclose(coarse, img.data.reshape(1, 4, 2, 4, 2, 1).mean(axis=(2, 4)), rtol=1e-12)


# ------------------------------------------------------------------ model


def test_single_stage_model_is_the_stage():
    model, store = f64_model(ModelConfig(stage=TINY), noise=0.02)
    img = t64(images()[0])
    out = model(img)
    direct = model.stage0(image_pyramid(img, 3))
    assert len(out.restored) == 1
    for a, b in zip(out.restored[0], direct.outputs):
        assert np.array_equal(a.data, b.data)


def test_zero_init_heads_give_input_pyramid_at_every_stage():
    model, _ = f64_model(ModelConfig(stages=2, stage=TINY))
    img = t64(images()[0])
    out = model(img)
    for outputs in out.restored:
        for pred, inp in zip(outputs, image_pyramid(img, 3)):
            assert np.array_equal(pred.data, inp.data)
    assert out.final is out.restored[-1][0]


def test_batch_elements_are_independent():
    model, _ = f64_model(ModelConfig(stages=2, stage=TINY), noise=0.02)
    x = images(n=2)[0]
    both = model(t64(x)).final.data
    for i in range(2):
        assert np.array_equal(both[i : i + 1], model(t64(x[i : i + 1])).final.data)


def test_every_parameter_receives_gradient():
    cfg = ModelConfig(stages=2, stage=TINY)
    model, store = f64_model(cfg, seed=3, noise=0.05)
    x, y = images(seed=4)
    grads = backward(total_loss(model(t64(x)), t64(y), cfg), store)
    dead = [n for n in store.names() if not np.any(grads[n])]
    assert dead == []


def test_small_adam_step_descends():
    cfg = ModelConfig(stages=2, stage=TINY)
    x, y = images(seed=5)
    with precision(np.float64):
        model, store = f64_model(cfg, seed=5)
        before = total_loss(model(t64(x)), t64(y), cfg)
        adam_step(store, backward(before, store), lr=1e-5)
        model.bind(store)
        after = total_loss(model(t64(x)), t64(y), cfg)
    assert after.item() < before.item()


def test_config_validation_and_digest():
    with pytest.raises(ValueError):
        ModelConfig(stages=0)
    with pytest.raises(ValueError):
        ModelConfig(loss="l1")
    with pytest.raises(ValueError):
        ModelConfig(freq_weight=-1)
    assert preset("maxim-2s").digest() == preset("maxim-2s").digest()
    assert preset("maxim-2s").digest() != preset("maxim-3s").digest()
    assert preset("tiny").digest() != replace(preset("tiny"), freq_weight=0.2).digest()
    with pytest.raises(ValueError):
        preset("maxim-9s")


def test_model_rejects_non_rgb_and_unpadded():
    model = Restorer(ModelConfig(stage=TINY))
    model.bind(init_params(model))
    with pytest.raises(ValueError):
        model(Tensor(np.zeros((1, 32, 32, 4))))
    with pytest.raises(ValueError):
        model(Tensor(np.zeros((1, 40, 32, 3))))
