import numpy as np
import pytest

from fuzz import CASES
from oracles import conv2d_loops
from topocnn.nn import functional as F


@pytest.mark.parametrize("layer", sorted(CASES))
def test_layer_matches_loop_oracle(layer):
    rng = np.random.default_rng(sorted(CASES).index(layer))
    for _ in range(20):
        got, want = CASES[layer](rng)
        assert got.dtype == np.float32
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


@pytest.mark.parametrize("layer", sorted(CASES))
def test_layer_float64_tight(layer):
    rng = np.random.default_rng(99)
    for _ in range(5):
        got, want = CASES[layer](rng, np.float64)
        assert got.dtype == np.float64
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_same_padding_puts_extra_pixel_after():
    assert F.pad_amounts(2, "same") == (0, 1)
    assert F.pad_amounts(3, "same") == (1, 1)
    assert F.pad_amounts(4, "same") == (1, 2)
    assert F.output_size(32, 2, "same") == 32
    assert F.output_size(32, 3, "valid") == 30
    with pytest.raises(ValueError):
        F.pad_amounts(3, "full")


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((2, 5, 5, 3))
    w = np.zeros((3, 3, 3, 3))
    w[1, 1] = np.eye(3)
    np.testing.assert_allclose(F.conv2d_forward(x, w, np.zeros(3), "same"), x, atol=1e-15)


def test_conv_asymmetric_kernel_orientation():
    x = np.zeros((1, 3, 3, 1))
    x[0, 0, 0, 0] = 1.0
    w = np.arange(4, dtype=float).reshape(2, 2, 1, 1)
    y = F.conv2d_forward(x, w, np.zeros(1), "valid")
    # cross-correlation: output (0, 0) sees the input at kernel position (0, 0)
    assert y[0, 0, 0, 0] == 0.0
    np.testing.assert_array_equal(y, conv2d_loops(x, w, np.zeros(1)))


def test_separable_is_exact_composition(rng):
    x = rng.standard_normal((2, 6, 6, 4)).astype(np.float32)
    dw = rng.standard_normal((2, 2, 4)).astype(np.float32)
    pw = rng.standard_normal((1, 1, 4, 5)).astype(np.float32)
    b = rng.standard_normal(5).astype(np.float32)
    composed = F.conv2d_forward(F.depthwise_conv2d_forward(x, dw, None, "same"), pw, b, "valid")
    assert np.array_equal(F.separable_conv2d_forward(x, dw, pw, b, "same"), composed)


def test_maxpool_drops_odd_edge_and_routes_gradient():
    x = np.arange(15, dtype=float).reshape(1, 3, 5, 1)
    y, idx = F.maxpool2d_forward(x)
    assert y.shape == (1, 1, 2, 1)
    np.testing.assert_array_equal(y[0, :, :, 0], [[6, 8]])
    dx = F.maxpool2d_backward(np.ones_like(y), idx, x.shape)
    assert dx.sum() == 2 and dx[0, 1, 1, 0] == 1 and dx[0, 1, 3, 0] == 1


def test_batchnorm_eval_uses_running_stats(rng):
    x = rng.standard_normal((4, 2, 2, 3))
    rm, rv = np.array([1.0, 2.0, 3.0]), np.array([4.0, 1.0, 0.25])
    y, _, m2, v2 = F.batchnorm_forward(x, np.ones(3), np.zeros(3), rm, rv, training=False)
    np.testing.assert_allclose(y, (x - rm) / np.sqrt(rv + 1e-3))
    assert m2 is rm and v2 is rv


def test_batchnorm_running_update_momentum(rng):
    x = rng.standard_normal((8, 3, 3, 2)) * 2 + 5
    _, _, m, v = F.batchnorm_forward(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)
    np.testing.assert_allclose(m, 0.01 * x.mean(axis=(0, 1, 2)))
    np.testing.assert_allclose(v, 0.99 + 0.01 * x.var(axis=(0, 1, 2)))


def test_batchnorm_needs_two_values():
    with pytest.raises(ValueError, match="at least 2"):
        F.batchnorm_forward(np.ones((1, 1, 1, 1)), np.ones(1), np.zeros(1),
                            np.zeros(1), np.ones(1), True)


def test_softmax_stable_and_normalized():
    p = F.softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    np.testing.assert_allclose(p, [[0.5, 0.5, 0.0]])


def test_cross_entropy_values_and_clip():
    labels = F.one_hot([0, 2], 3)
    probs = np.array([[0.5, 0.25, 0.25], [1.0, 0.0, 0.0]])
    expected = -(np.log(0.5) + np.log(1e-7)) / 2
    assert F.cross_entropy_loss(probs, labels) == pytest.approx(expected)
    with pytest.raises(ValueError, match="one-hot"):
        F.cross_entropy_loss(probs, np.full((2, 3), 1 / 3))
    with pytest.raises(ValueError, match="sum to 1"):
        F.cross_entropy_loss(probs * 2, labels)


def test_shape_errors(rng):
    with pytest.raises(ValueError, match="rank 4"):
        F.conv2d_forward(np.zeros((3, 3, 1)), np.zeros((1, 1, 1, 1)), np.zeros(1))
    with pytest.raises(ValueError, match="too small"):
        F.conv2d_forward(np.zeros((1, 2, 2, 1)), np.zeros((3, 3, 1, 1)), np.zeros(1), "valid")
    with pytest.raises(ValueError, match="dense"):
        F.dense_forward(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))
    with pytest.raises(ValueError, match="max pool"):
        F.maxpool2d_forward(np.zeros((1, 1, 4, 1)))


def test_conv_small_examples():
    x = np.ones((1, 3, 3, 1))
    y = F.conv2d_forward(x, np.ones((2, 2, 1, 1)), np.zeros(1), "valid")
    np.testing.assert_array_equal(y, np.full((1, 2, 2, 1), 4.0))
    x = np.arange(9.0).reshape(1, 3, 3, 1)
    np.testing.assert_array_equal(F.conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)


def test_depthwise_channel_independence():
    x = np.ones((1, 3, 3, 2))
    w = np.ones((2, 2, 2))
    y = F.depthwise_conv2d_forward(x, w, np.zeros(2), "valid")
    np.testing.assert_array_equal(y, np.full((1, 2, 2, 2), 4.0))
    w[:, :, 0] = 0.0
    x[..., 0] = 100.0
    y = F.depthwise_conv2d_forward(x, w, np.array([0.5, 0.0]), "valid")
    np.testing.assert_array_equal(y[..., 0], 0.5)
    np.testing.assert_array_equal(y[..., 1], 4.0)


def test_separable_with_identity_pointwise_is_depthwise(rng):
    x = rng.standard_normal((1, 4, 4, 3))
    dw = rng.standard_normal((2, 2, 3))
    pw = np.eye(3).reshape(1, 1, 3, 3)
    np.testing.assert_array_equal(F.separable_conv2d_forward(x, dw, pw, np.zeros(3), "same"),
                                  F.depthwise_conv2d_forward(x, dw, None, "same"))


def test_maxpool_examples():
    y, _ = F.maxpool2d_forward(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1))
    assert y.item() == 4.0
    y, _ = F.maxpool2d_forward(np.full((1, 5, 5, 2), 7.0))
    assert y.shape == (1, 2, 2, 2) and np.all(y == 7.0)


def test_batchnorm_train_statistics(rng):
    x = rng.standard_normal((4, 3, 3, 2)) * 5 + 2
    y = F.batchnorm_forward(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)[0]
    assert np.all(np.abs(y.mean(axis=(0, 1, 2))) < 1e-6)
    assert np.all(np.abs(y.var(axis=(0, 1, 2)) - 1) <= 1e-3)
    z = F.batchnorm_forward(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), False)[0]
    np.testing.assert_allclose(z, x / np.sqrt(1 + 1e-3))


def test_small_elementwise_examples():
    np.testing.assert_allclose(F.softmax(np.zeros((1, 3))), [[1 / 3] * 3])
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(F.dense_forward(x, np.eye(3), np.zeros(3)), x)
    uniform = np.full((2, 3), 1 / 3)
    assert F.cross_entropy_loss(uniform, F.one_hot([0, 1], 3)) == pytest.approx(np.log(3))
    assert F.cross_entropy_loss(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_array_equal(F.flatten_forward(np.arange(8.0).reshape(1, 2, 2, 2)),
                                  [np.arange(8.0)])


def test_cross_entropy_matches_scalar_formula(rng):
    probs = rng.random((5, 3))
    probs /= probs.sum(axis=1, keepdims=True)
    labels = F.one_hot([0, 1, 2, 2, 1], 3)
    want = -sum(np.log(probs[i, k]) for i, k in enumerate([0, 1, 2, 2, 1])) / 5
    assert F.cross_entropy_loss(probs, labels) == pytest.approx(want, rel=1e-15)
