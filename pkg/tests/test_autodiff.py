import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxim.autodiff import NonFiniteError, ParamStore, Tensor, backward, grad, grad_check, no_grad, ops, precision
from maxim.multistage import charbonnier

from .conftest import t64


def brute_dft2(x: np.ndarray) -> np.ndarray:
    """Direct double-sum DFT over the first two axes of an (H, W) array."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    for u, v in itertools.product(range(h), range(w)):
        for i, j in itertools.product(range(h), range(w)):
            out[u, v] += x[i, j] * np.exp(-2j * np.pi * (u * i / h + v * j / w))
    return out


def brute_l1diff(a: np.ndarray, b: np.ndarray) -> float:
    n, h, w, c = a.shape
    total = 0.0
    for k in range(n):
        for ch in range(c):
            d = brute_dft2(a[k, :, :, ch] - b[k, :, :, ch])
            total += np.abs(d.real).sum() + np.abs(d.imag).sum()
    return total / a.size


# ---------------------------------------------------------------- tensors


def test_tensor_is_immutable_and_sized():
    t = Tensor(np.arange(6.0).reshape(2, 3))
    assert t.size == 6 and t.data.size == 6
    assert t.dtype == np.float32
    with pytest.raises(ValueError):
        t.data[0, 0] = 5.0


def test_non_finite_values_raise():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        ops.div(Tensor([1.0]), Tensor([0.0]))


def test_float64_mode():
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


# ------------------------------------------------------------- elementwise


def test_mul_values():
    np.testing.assert_array_equal(ops.mul(Tensor([1, 2]), Tensor([3, 4])).data, [3, 8])


def test_add_zeros_is_identity(rng):
    x = Tensor(rng.standard_normal((3, 4)))
    assert np.array_equal(ops.add(x, Tensor(np.zeros((3, 4)))).data, x.data)


def test_mul_gradient_matches_finite_difference():
    x, y = t64([1.0, 2.0], grad=True), t64([3.0, 4.0])
    (gx,) = grad(ops.sum(ops.mul(x, y)), [x])
    np.testing.assert_allclose(gx, [3.0, 4.0])
    h = 1e-4
    fd = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        plus = ops.sum(ops.mul(t64(x.data + e), y)).item()
        minus = ops.sum(ops.mul(t64(x.data - e), y)).item()
        fd.append((plus - minus) / (2 * h))
    np.testing.assert_allclose(gx, fd, rtol=1e-9)


def test_unary_ops(rng):
    x = rng.uniform(0.5, 2.0, size=5)
    np.testing.assert_allclose(ops.neg(t64(x)).data, -x)
    np.testing.assert_allclose(ops.sqrt(t64(x)).data, np.sqrt(x))
    np.testing.assert_allclose(ops.square(t64(x)).data, x * x)


def test_broadcast_mismatch_raises():
    with pytest.raises(ValueError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2,))))


def test_broadcast_gradient_is_sum_over_broadcast_axes(rng):
    x = t64(rng.standard_normal((2, 3, 4)))
    b = t64(rng.standard_normal((1, 3, 1)), grad=True)
    up = rng.standard_normal((2, 3, 4))
    out = ops.sum(ops.mul(ops.add(x, b), t64(up)))
    (gb,) = grad(out, [b])
    np.testing.assert_allclose(gb, up.sum(axis=(0, 2), keepdims=True), rtol=1e-12)
    err = grad_check(lambda x_, b_: ops.sum(ops.mul(ops.mul(x_, b_), t64(up))), [x.data, b.data])
    assert err < 1e-6


def test_shared_input_accumulation_is_order_independent(rng):
    x = rng.standard_normal(16)
    ws = [rng.standard_normal(16) for _ in range(4)]
    results = []
    for order in itertools.permutations(range(4)):
        xt = t64(x, grad=True)
        terms = [ops.sum(ops.mul(xt, t64(ws[k]))) for k in order]
        total = terms[0]
        for t in terms[1:]:
            total = ops.add(total, t)
        results.append(grad(total, [xt])[0])
    for r in results[1:]:
        np.testing.assert_allclose(r, results[0], rtol=1e-12, atol=0)


# ------------------------------------------------------------------ dense


def test_dense_shape_and_values(rng):
    x = Tensor(rng.standard_normal((2, 3, 4)))
    assert ops.dense(x, Tensor(rng.standard_normal((4, 5)))).shape == (2, 3, 5)
    eye = ops.dense(x, Tensor(np.eye(4)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(eye.data, x.data)
    np.testing.assert_array_equal(ops.dense(Tensor([[1, 2]]), Tensor([[1], [1]])).data, [[3]])


def test_dense_inner_mismatch_raises():
    with pytest.raises(ValueError):
        ops.dense(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


# ------------------------------------------------------------------- conv


def test_conv_identity_1x1(rng):
    x = Tensor(rng.standard_normal((1, 5, 5, 3)))
    k = Tensor(np.eye(3).reshape(1, 1, 3, 3))
    np.testing.assert_allclose(ops.conv2d(x, k).data, x.data, rtol=1e-6)


def test_conv_stride2_shape(rng):
    out = ops.conv2d(Tensor(rng.standard_normal((1, 8, 8, 3))), Tensor(rng.standard_normal((3, 3, 3, 16))), stride=2)
    assert out.shape == (1, 4, 4, 16)


def test_conv_all_ones_on_constant_interior():
    x = Tensor(np.ones((1, 5, 5, 1)))
    out = ops.conv2d(x, Tensor(np.ones((3, 3, 1, 1))))
    assert out.data[0, 2, 2, 0] == 9.0
    assert out.data[0, 0, 0, 0] == 4.0  # zero padding at the corner


def test_conv_against_direct_loops(rng):
    x = rng.standard_normal((2, 6, 5, 3))
    k = rng.standard_normal((3, 3, 3, 4))
    out = ops.conv2d(t64(x), t64(k)).data
    pad = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((2, 6, 5, 4))
    for i, j in itertools.product(range(6), range(5)):
        ref[:, i, j] = np.einsum("nabc,abcd->nd", pad[:, i : i + 3, j : j + 3], k)
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


def test_conv_errors():
    with pytest.raises(ValueError):
        ops.conv2d(Tensor(np.ones((1, 5, 5, 1))), Tensor(np.ones((3, 3, 1, 1))), stride=2)
    with pytest.raises(ValueError):
        ops.conv2d(Tensor(np.ones((1, 4, 4, 1))), Tensor(np.ones((2, 2, 1, 1))))


# -------------------------------------------------------------- layernorm


def test_layernorm_examples():
    ones, zeros = Tensor(np.ones(3)), Tensor(np.zeros(3))
    np.testing.assert_array_equal(ops.layernorm(Tensor(np.full((2, 3), 7.0)), ones, zeros).data, 0.0)
    two = ops.layernorm(t64([[1.0, 3.0]]), t64(np.ones(2)), t64(np.zeros(2))).data
    np.testing.assert_allclose(two, [[-1.0, 1.0]], atol=1e-5)
    beta = np.array([0.5, -1.0, 2.0])
    out = ops.layernorm(Tensor(np.random.default_rng(0).standard_normal((4, 3))), zeros, Tensor(beta))
    np.testing.assert_allclose(out.data, np.broadcast_to(beta, (4, 3)))


def test_layernorm_matches_formula(rng):
    x = rng.standard_normal((3, 5, 8)) * 3 + 10
    g, b = rng.standard_normal(8), rng.standard_normal(8)
    mu = x.mean(-1, keepdims=True)
    var = x.var(-1, keepdims=True)
    ref = (x - mu) / np.sqrt(var + 1e-6) * g + b
    np.testing.assert_allclose(ops.layernorm(t64(x), t64(g), t64(b)).data, ref, rtol=1e-10, atol=1e-10)


# ------------------------------------------------------------ activations


def test_activation_values():
    assert ops.gelu(Tensor([0.0])).data[0] == 0.0
    np.testing.assert_allclose(ops.leaky_relu(Tensor([-1.0]), 0.2).data, [-0.2])
    assert ops.sigmoid(Tensor([0.0])).data[0] == 0.5


def test_gelu_is_tanh_approximation():
    x = np.linspace(-4, 4, 41)
    ref = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(ops.gelu(t64(x)).data, ref, rtol=1e-12, atol=1e-15)


def test_softmax_rows_sum_to_one(rng):
    s = ops.softmax(Tensor(rng.standard_normal((4, 7)) * 10), axis=-1).data
    np.testing.assert_allclose(s.sum(-1), 1.0, atol=1e-6)


# ------------------------------------------------------ reshape / permute


def test_reshape_round_trip(rng):
    x = Tensor(rng.standard_normal((6, 4, 5)))
    back = ops.reshape(ops.reshape(x, (3, 2, 2, 2, 5)), (6, 4, 5))
    assert np.array_equal(back.data, x.data)
    with pytest.raises(ValueError):
        ops.reshape(x, (7, 4, 5))


def test_permute_round_trip(rng):
    x = Tensor(rng.standard_normal((2, 3, 4, 5)))
    perm = (2, 0, 3, 1)
    inv = tuple(np.argsort(perm))
    assert np.array_equal(ops.transpose(ops.transpose(x, perm), inv).data, x.data)
    with pytest.raises(ValueError):
        ops.transpose(x, (0, 0, 1, 2))


def test_permute_gradient_is_inverse_permute(rng):
    x = t64(rng.standard_normal((2, 3, 4)), grad=True)
    up = rng.standard_normal((4, 2, 3))
    (g,) = grad(ops.sum(ops.mul(ops.transpose(x, (2, 0, 1)), t64(up))), [x])
    np.testing.assert_array_equal(g, np.transpose(up, (1, 2, 0)))
    assert grad_check(lambda a: ops.sum(ops.mul(ops.transpose(a, (2, 0, 1)), t64(up))), x.data) < 1e-8


def test_pad_crop_round_trip(rng):
    x = Tensor(rng.standard_normal((1, 5, 7, 2)))
    for mode in ("constant", "reflect", "symmetric", "edge"):
        padded = ops.pad2d(x, 2, 1, 3, 2, mode)
        assert np.array_equal(ops.crop(padded, 2, 3, 5, 7).data, x.data)


# ----------------------------------------------------------------- resize


def test_nearest_upsample_example():
    x = Tensor(np.array([[1, 2], [3, 4]], dtype=float).reshape(1, 2, 2, 1))
    out = ops.resize(x, (4, 4), "nearest").data[0, :, :, 0]
    np.testing.assert_array_equal(out, [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]])


def test_bilinear_constant_and_half():
    const = ops.resize(Tensor(np.full((1, 8, 6, 2), 0.3)), (3, 5), "bilinear").data
    np.testing.assert_allclose(const, 0.3, rtol=1e-6)
    x = Tensor(np.array([[0, 0], [2, 2]], dtype=float).reshape(1, 2, 2, 1))
    np.testing.assert_allclose(ops.resize(x, (1, 1), "bilinear").data.reshape(()), 1.0)


def test_resize_zero_target_raises():
    with pytest.raises(ValueError):
        ops.resize(Tensor(np.ones((1, 4, 4, 1))), (0, 2))


# -------------------------------------------------------------------- fft


def test_rfft2_l1diff_examples():
    z = np.zeros((1, 2, 2, 1))
    imp = z.copy()
    imp[0, 0, 0, 0] = 1.0
    assert ops.rfft2_l1diff(t64(imp), t64(imp)).item() == 0.0
    assert ops.rfft2_l1diff(t64(imp), t64(z)).item() == pytest.approx(1.0, abs=1e-12)
    assert brute_l1diff(imp, z) == pytest.approx(1.0, abs=1e-12)


def test_rfft2_l1diff_matches_brute_force(rng):
    a, b = rng.standard_normal((2, 4, 6, 3)), rng.standard_normal((2, 4, 6, 3))
    assert ops.rfft2_l1diff(t64(a), t64(b)).item() == pytest.approx(brute_l1diff(a, b), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(s=st.floats(min_value=-5, max_value=5).filter(lambda v: abs(v) > 1e-3), seed=st.integers(0, 2**16))
def test_rfft2_l1diff_scales_linearly(s, seed):
    r = np.random.default_rng(seed)
    a, b = r.standard_normal((1, 4, 4, 2)), r.standard_normal((1, 4, 4, 2))
    base = ops.rfft2_l1diff(t64(a), t64(b)).item()
    scaled = ops.rfft2_l1diff(t64(b + s * (a - b)), t64(b)).item()
    assert scaled == pytest.approx(abs(s) * base, rel=1e-9)


# --------------------------------------------------------------- backward


def test_backward_linear_and_quadratic(rng):
    store = ParamStore()
    w = store.add("w", Tensor(rng.standard_normal((3, 2)), requires_grad=True, dtype=np.float64))
    unused = store.add("unused", Tensor(np.ones(4), requires_grad=True))
    g = backward(ops.sum(w), store)
    np.testing.assert_array_equal(g["w"], np.ones((3, 2)))
    np.testing.assert_array_equal(g["unused"], np.zeros(4))
    g = backward(ops.sum(ops.mul(w, w)), store)
    np.testing.assert_allclose(g["w"], 2 * w.data)
    assert unused.shape == (4,)


def test_backward_errors():
    store = ParamStore()
    w = store.add("w", Tensor(np.ones(3), requires_grad=True))
    with pytest.raises(ValueError):
        backward(ops.mul(w, w), store)
    with pytest.raises(ValueError):
        backward(ops.sum(Tensor(np.ones(3))), store)


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = ops.sum(ops.mul(w, w))
    assert not out.requires_grad


# ------------------------------------------------------------- grad_check


def test_grad_check_quadratic_and_charbonnier(rng):
    x = rng.standard_normal((3, 4))
    assert grad_check(lambda a: ops.sum(ops.square(a)), x) < 1e-8
    zeros = np.zeros((1, 4, 4, 3))
    assert grad_check(lambda a: charbonnier(a, t64(zeros)), rng.standard_normal((1, 4, 4, 3))) < 1e-6


def test_grad_check_detects_wrong_gradient(rng):
    from maxim.autodiff.tensor import make_node

    def bad_square(a):
        return make_node(a.data**2, (a,), lambda g: (g * a.data,), "bad")  # missing factor 2

    assert grad_check(lambda a: ops.sum(bad_square(a)), rng.uniform(1, 2, size=4)) > 0.1


def test_determinism_bit_identical(rng):
    x = rng.standard_normal((2, 8, 8, 3)).astype(np.float32)
    k = rng.standard_normal((3, 3, 3, 5)).astype(np.float32)
    runs = [ops.gelu(ops.conv2d(Tensor(x), Tensor(k))).data for _ in range(2)]
    assert np.array_equal(runs[0], runs[1])
