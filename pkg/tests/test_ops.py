import numpy as np
import pytest

from oracles import check_grads, naive_conv3x3
from vfptrack import ops
from vfptrack.errors import DimensionError
from vfptrack.tensor import Tensor


def weighted_sum(t, w):
    return ops.sum_all(ops.mul(t, ops.constant(w)))


# ------------------------------------------------------------------- linear


def test_linear_identity_case():
    x = Tensor(np.eye(2))
    w = Tensor(np.eye(2))
    b = Tensor(np.zeros(2))
    np.testing.assert_array_equal(ops.linear(x, w, b).data, np.eye(2))


def test_linear_zero_input_broadcasts_bias():
    x = Tensor(np.zeros((3, 2)))
    w = Tensor(np.ones((2, 4)))
    b = Tensor(np.arange(4.0))
    out = ops.linear(x, w, b).data
    np.testing.assert_array_equal(out, np.tile(np.arange(4.0), (3, 1)))


def test_linear_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(3, 2\).*\(3, 4\)"):
        ops.linear(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 4))), Tensor(np.zeros(4)))


def test_linear_weight_gradient_vs_finite_differences():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=(3,))

    def build(ts):
        return ops.sum_all(ops.linear(ts[0], ts[1], ts[2]))

    assert check_grads(build, [x, w, b]) < 1e-6


# --------------------------------------------------------------- layer norm


def test_layer_norm_zero_input_is_zero():
    x = Tensor(np.zeros((3, 5)))
    out = ops.layer_norm(x, Tensor(np.ones(5)), Tensor(np.zeros(5)), 1e-5)
    np.testing.assert_array_equal(out.data, np.zeros((3, 5)))


def test_layer_norm_rows_standardized():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(6, 32)))
    out = ops.layer_norm(x, Tensor(np.ones(32)), Tensor(np.zeros(32)), 1e-12).data
    assert np.abs(out.mean(axis=1)).max() < 1e-12
    assert np.abs(out.var(axis=1) - 1.0).max() < 1e-9


def test_layer_norm_gradient_vs_finite_differences():
    rng = np.random.default_rng(3)
    arrs = [rng.normal(size=(2, 3)), rng.normal(size=(3,)), rng.normal(size=(3,))]
    wsum = rng.normal(size=(2, 3))

    def build(ts):
        return weighted_sum(ops.layer_norm(ts[0], ts[1], ts[2], 1e-6), wsum)

    assert check_grads(build, arrs) < 1e-5


# ---------------------------------------------------------- softmax / gelu


def test_softmax_symmetry_and_stability():
    np.testing.assert_allclose(ops.softmax(Tensor(np.array([0.0, 0.0]))).data, [0.5, 0.5])
    out = ops.softmax(Tensor(np.array([1000.0, 1000.0]))).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(4)
    out = ops.softmax(Tensor(rng.normal(size=(7, 9)) * 30)).data
    assert np.abs(out.sum(axis=-1) - 1.0).max() < 1e-12


def test_gelu_gradient_vs_finite_differences():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 5))
    wsum = rng.normal(size=(4, 5))
    assert check_grads(lambda ts: weighted_sum(ops.gelu(ts[0]), wsum), [x]) < 1e-5


# -------------------------------------------------------------------- conv


def test_conv2d_delta_kernel_is_identity():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(3, 5, 5))
    w = np.zeros((3, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3))).data
    np.testing.assert_array_equal(out, x)


def test_conv2d_zero_weights_zero_output():
    x = Tensor(np.random.default_rng(7).normal(size=(2, 4, 4)))
    out = ops.conv2d(x, Tensor(np.zeros((5, 2, 3, 3))), Tensor(np.zeros(5))).data
    np.testing.assert_array_equal(out, np.zeros((5, 4, 4)))


def test_conv2d_matches_six_loop_oracle():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 4, 4))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=(3,))
    got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    want = naive_conv3x3(x, w, b)
    assert np.abs(got - want).max() < 1e-12


def test_conv2d_channel_mismatch():
    with pytest.raises(DimensionError, match="channels"):
        ops.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((3, 5, 3, 3))), Tensor(np.zeros(3)))


# -------------------------------------------------- randomized grad property


CASES = {
    "linear": lambda rng: (
        [rng.normal(size=(3, 4)), rng.normal(size=(4, 5)), rng.normal(size=(5,))],
        lambda ts, w: weighted_sum(ops.linear(*ts), w),
        (3, 5),
    ),
    "layer_norm": lambda rng: (
        [rng.normal(size=(4, 6)), rng.normal(size=(6,)), rng.normal(size=(6,))],
        lambda ts, w: weighted_sum(ops.layer_norm(ts[0], ts[1], ts[2], 1e-6), w),
        (4, 6),
    ),
    "softmax": lambda rng: (
        [rng.normal(size=(3, 7))],
        lambda ts, w: weighted_sum(ops.softmax(ts[0]), w),
        (3, 7),
    ),
    "gelu": lambda rng: (
        [rng.normal(size=(3, 7))],
        lambda ts, w: weighted_sum(ops.gelu(ts[0]), w),
        (3, 7),
    ),
    "sigmoid": lambda rng: (
        [rng.normal(size=(3, 7))],
        lambda ts, w: weighted_sum(ops.sigmoid(ts[0]), w),
        (3, 7),
    ),
    "relu": lambda rng: (
        [rng.normal(size=(3, 7)) + 0.05],
        lambda ts, w: weighted_sum(ops.relu(ts[0]), w),
        (3, 7),
    ),
    "conv2d": lambda rng: (
        [rng.normal(size=(2, 4, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=(3,))],
        lambda ts, w: weighted_sum(ops.conv2d(*ts), w),
        (3, 4, 4),
    ),
    "bmatmul": lambda rng: (
        [rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 5))],
        lambda ts, w: weighted_sum(ops.bmatmul(*ts), w),
        (2, 3, 5),
    ),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_gradients_randomized_20_seeds(name):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        arrs, fn, wshape = CASES[name](rng)
        w = rng.normal(size=wshape)
        worst = max(worst, check_grads(lambda ts: fn(ts, w), arrs))
    assert worst < 1e-4, f"{name}: max rel err {worst}"


def test_forward_determinism():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(4, 6))
    a = ops.gelu(ops.softmax(Tensor(x))).data
    b = ops.gelu(ops.softmax(Tensor(x.copy()))).data
    assert np.array_equal(a, b)


def test_two_layer_composition_gradient():
    rng = np.random.default_rng(10)
    arrs = [
        rng.normal(size=(3, 4)),
        rng.normal(size=(4, 6)),
        rng.normal(size=(6,)),
        rng.normal(size=(6, 2)),
        rng.normal(size=(2,)),
    ]
    wsum = rng.normal(size=(3, 2))

    def build(ts):
        x, w1, b1, w2, b2 = ts
        return weighted_sum(ops.linear(ops.gelu(ops.linear(x, w1, b1)), w2, b2), wsum)

    assert check_grads(build, arrs) < 1e-4


def test_structural_ops_round_trip_gradients():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(6, 8))
    w = rng.normal(size=(2, 6, 4))

    def build(ts):
        h = ops.heads_split(ts[0], 2)  # [2, 6, 4]
        return weighted_sum(h, w)

    assert check_grads(build, [x]) < 1e-6
    y = ops.heads_merge(ops.heads_split(Tensor(x), 2)).data
    np.testing.assert_array_equal(y, x)
    g = ops.grid_to_tokens(ops.tokens_to_grid(Tensor(x[:6]), 2, 3)).data
    np.testing.assert_array_equal(g, x[:6])
