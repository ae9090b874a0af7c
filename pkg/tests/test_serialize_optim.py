import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from topocnn.nn import (SGD, Adam, ContainerError, Model, load_weights, make_optimizer,
                        read_tensors, reference_config, save_weights, write_tensors)
from topocnn.nn.serialize import decode_tensors, encode_tensors

tensor = st.one_of(
    arrays(np.float32, array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=4)),
    arrays(np.float64, array_shapes(min_dims=0, max_dims=3, min_side=0, max_side=4)),
)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=12), tensor, max_size=5))
def test_container_round_trip(tensors):
    back = decode_tensors(encode_tensors(tensors))
    assert list(back) == list(tensors)
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape
        np.testing.assert_array_equal(back[k], v)


def test_container_layout_is_little_endian():
    raw = encode_tensors({"a": np.array([1.0], dtype=np.float32)})
    assert raw[:4] == b"B2DW"
    assert raw[4:6] == b"\x01\x00" and raw[6:10] == b"\x01\x00\x00\x00"
    assert raw[-4:] == np.array([1.0], dtype="<f4").tobytes()


def test_container_errors():
    raw = encode_tensors({"w": np.zeros((2, 3))})
    with pytest.raises(ContainerError, match="truncated"):
        decode_tensors(raw[:-1])
    with pytest.raises(ContainerError, match="trailing"):
        decode_tensors(raw + b"\0")
    with pytest.raises(ContainerError, match="magic"):
        decode_tensors(b"XXXX" + raw[4:])
    with pytest.raises(ContainerError, match="version"):
        decode_tensors(raw[:4] + b"\x02\x00" + raw[6:])
    with pytest.raises(ContainerError, match="dtype"):
        encode_tensors({"i": np.zeros(2, dtype=np.int32)})


def test_weights_round_trip_with_optimizer(tmp_path):
    cfg = reference_config(input_shape=(8, 8, 3))
    model = Model(cfg, seed=4)
    opt = Adam()
    rng = np.random.default_rng(0)
    model.train_step(rng.standard_normal((4, 8, 8, 3)), [0, 1, 2, 0])
    opt.step(model.params(), model.grads())
    save_weights(model, tmp_path / "w.b2dw", opt)
    other, opt2 = Model(cfg, seed=5), Adam()
    load_weights(other, tmp_path / "w.b2dw", opt2)
    for k, v in model.state().items():
        np.testing.assert_array_equal(other.state()[k], v)
    assert opt2.t == 1 and set(opt2.m) == set(opt.m)
    x = rng.standard_normal((2, 8, 8, 3))
    np.testing.assert_array_equal(model.predict_proba(x), other.predict_proba(x))


def test_load_rejects_mismatch_without_touching_model(tmp_path):
    small = Model(reference_config(dense_width=8, input_shape=(8, 8, 3)))
    save_weights(small, tmp_path / "w.b2dw")
    model = Model(reference_config(dense_width=9, input_shape=(8, 8, 3)), seed=1)
    before = {k: v.copy() for k, v in model.state().items()}
    with pytest.raises(ContainerError, match="b4_dense/kernel"):
        load_weights(model, tmp_path / "w.b2dw")
    for k, v in model.state().items():
        np.testing.assert_array_equal(v, before[k])
    tensors = read_tensors(tmp_path / "w.b2dw")
    del tensors["b1_bn/moving_var"]
    write_tensors(tmp_path / "partial.b2dw", tensors)
    with pytest.raises(ContainerError, match="missing"):
        load_weights(small, tmp_path / "partial.b2dw")


def adam_reference(p, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return p


def test_adam_matches_scalar_reference():
    gs = [0.5, -1.0, 2.0, 0.0, 0.25]
    p = {"w": np.array([1.0])}
    opt = Adam()
    for g in gs:
        opt.step(p, {"w": np.array([g])})
    assert p["w"][0] == pytest.approx(adam_reference(1.0, gs), rel=1e-12)


def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([3.0, -3.0])}
    Adam(lr=0.01).step(p, {"w": np.array([5.0, -0.2])})
    np.testing.assert_allclose(p["w"], [2.99, -2.99], rtol=1e-6)


def test_sgd_and_factory():
    p = {"w": np.array([1.0, 2.0])}
    SGD(lr=0.5).step(p, {"w": np.array([2.0, -2.0])})
    np.testing.assert_array_equal(p["w"], [0.0, 3.0])
    assert isinstance(make_optimizer("adam", 1e-3), Adam)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 1e-3)
    with pytest.raises(ValueError, match="shape"):
        SGD().step(p, {"w": np.zeros(3)})


def test_adam_minimises_quadratic():
    p = {"w": np.array([5.0, -4.0])}
    opt = Adam(lr=0.1)
    for _ in range(500):
        opt.step(p, {"w": 2 * p["w"]})
    assert np.all(np.abs(p["w"]) < 1e-2)


def test_training_reduces_loss_on_separable_toy_data():
    cfg = reference_config(input_shape=(8, 8, 3))
    model = Model(cfg, seed=0)
    opt = Adam(lr=1e-2)
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1, 2], 8)
    x = rng.standard_normal((24, 8, 8, 3)).astype(np.float32) * 0.1
    x[np.arange(24), :, :, y] += 1.0
    first = model.train_step(x, y)
    for _ in range(30):
        loss = model.train_step(x, y)
        opt.step(model.params(), model.grads())
    assert loss < first / 4
    assert (model.predict(x) == y).mean() == 1.0


def test_adam_zero_gradient_and_zero_lr():
    p = {"w": np.array([1.5, -2.0])}
    opt = Adam()
    opt.step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])
    assert opt.t == 1 and np.all(opt.m["w"] == 0) and np.all(opt.v["w"] == 0)
    opt = Adam(lr=0.0)
    opt.step(p, {"w": np.array([3.0, 1.0])})
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])


def test_adam_first_step_is_lr_sign():
    g = np.array([0.3, -7.0, 1e-2])
    p = {"w": np.zeros(3)}
    Adam(lr=1e-3).step(p, {"w": g})
    np.testing.assert_allclose(p["w"], -1e-3 * np.sign(g), atol=1e-6)


def test_truncated_file_leaves_model_untouched(tmp_path):
    cfg = reference_config(input_shape=(8, 8, 3))
    save_weights(Model(cfg, seed=1), tmp_path / "w.b2dw")
    raw = (tmp_path / "w.b2dw").read_bytes()
    (tmp_path / "t.b2dw").write_bytes(raw[: len(raw) // 2])
    model = Model(cfg, seed=2)
    before = {k: v.copy() for k, v in model.state().items()}
    with pytest.raises(ContainerError, match="truncated"):
        load_weights(model, tmp_path / "t.b2dw")
    assert all(np.array_equal(before[k], v) for k, v in model.state().items())
