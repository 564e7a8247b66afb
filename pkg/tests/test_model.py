import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actorhoi.config import ConvSpec, ModelConfig
from actorhoi.loss import wce_backward, wce_forward
from actorhoi.model import AdamState, adam_step, backward, forward, init_params, param_count, param_shapes

import gradcheck
import oracles


def test_init_is_deterministic():
    a, b = init_params(ModelConfig(seed=3)), init_params(ModelConfig(seed=3))
    assert list(a) == list(b)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    c = init_params(ModelConfig(seed=4))
    assert not np.array_equal(a["conv0.weight"], c["conv0.weight"])


def test_initial_outputs_near_head_prior():
    cfg = ModelConfig()
    params = init_params(cfg)
    x = np.random.default_rng(0).random((2, 64, 64, 4))
    a, o, _ = forward(params, x, cfg)
    assert 0.08 <= a.mean() <= 0.12
    assert 0.08 <= o.mean() <= 0.12


def test_default_parameter_count():
    # 3x3 convs 4->8->16->32->32, then two 1x1 heads to K+1 = 4 channels
    expected = (8 * 4 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32) + (32 * 32 * 9 + 32) + 2 * (4 * 32 + 4)
    assert param_count(ModelConfig()) == expected == 15616


def test_registration_order():
    names = [n for n, _ in param_shapes(ModelConfig())]
    assert names[:2] == ["conv0.weight", "conv0.bias"]
    assert names[-4:] == ["actor_head.weight", "actor_head.bias", "object_head.weight", "object_head.bias"]


def test_forward_shapes_and_range():
    cfg = ModelConfig()
    params = init_params(cfg)
    x = np.random.default_rng(1).random((64, 64, 4))
    a, o, _ = forward(params, x, cfg)
    assert a.shape == o.shape == (16, 16, 4)
    assert np.all((a > 0) & (a < 1)) and np.all((o > 0) & (o < 1))
    ab, ob, _ = forward(params, np.stack([x, x]), cfg)
    assert ab.shape == (2, 16, 16, 4)
    assert np.array_equal(ab[0], a)


def test_forward_rejects_wrong_resolution():
    cfg = ModelConfig()
    with pytest.raises(ValueError):
        forward(init_params(cfg), np.zeros((32, 32, 4)), cfg)
    with pytest.raises(ValueError):
        forward(init_params(cfg), np.zeros((64, 64, 3)), cfg)


def test_mask_channel_is_live():
    cfg = ModelConfig()
    params = init_params(cfg)
    x0 = np.zeros((64, 64, 4))
    x1 = x0.copy()
    x1[..., 3] = 1.0
    a0, o0, _ = forward(params, x0, cfg)
    a1, o1, _ = forward(params, x1, cfg)
    assert not np.array_equal(a0, a1) and not np.array_equal(o0, o1)


def test_forward_is_deterministic():
    cfg = ModelConfig()
    params = init_params(cfg)
    x = np.random.default_rng(2).random((64, 64, 4))
    assert forward(params, x, cfg)[1].tobytes() == forward(params, x, cfg)[1].tobytes()


def test_end_to_end_gradient_sampled():
    cfg, params, x, sup = gradcheck.small_instance(seed=5)
    assert gradcheck.max_relative_error(cfg, params, x, sup, every=53) < 1e-4


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradient_with_strided_dilated_layers(activation):
    trunk = [ConvSpec(3, 3, 2, 1, activation), ConvSpec(5, 4, 1, 2, activation)]
    cfg = ModelConfig(input_width=8, input_height=8, num_verbs=1, trunk=trunk, mask_mode="rgb", seed=1)
    params = init_params(cfg)
    rng = np.random.default_rng(9)
    for k in params:
        params[k] += rng.normal(0, 0.1, params[k].shape)
    x = rng.random((8, 8, 3))
    shape = (4, 4, 2)
    sup = [((rng.random(shape) < 0.5).astype(float), np.ones(shape), np.ones(shape)) for _ in range(2)]
    assert gradcheck.max_relative_error(cfg, params, x, sup) < 1e-4


def _grads(params, cache, ga, go):
    return backward(params, cache, ga, go)


def test_backward_linearity():
    cfg = ModelConfig(input_width=16, input_height=16, num_verbs=2)
    params = init_params(cfg)
    rng = np.random.default_rng(3)
    a, o, cache = forward(params, rng.random((16, 16, 4)), cfg)
    zero = backward(params, cache, np.zeros_like(a), np.zeros_like(o))
    assert all(not g.any() for g in zero.values())
    ga, go = rng.normal(size=a.shape), rng.normal(size=o.shape)
    g1 = backward(params, cache, ga, go)
    g2 = backward(params, cache, 2 * ga, 2 * go)
    for k in params:
        assert np.array_equal(g2[k], 2 * g1[k])
        assert g1[k].shape == params[k].shape


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.zeros_like(params)
    state.m["w"][:] = [0.5, 0.5]
    state.v["w"][:] = [0.2, 0.2]
    new, st_ = adam_step(params, {"w": np.zeros(2)}, state)
    # with zero gradient the update is driven by the decayed moments only
    assert np.array_equal(st_.m["w"], 0.9 * np.array([0.5, 0.5]))
    assert np.array_equal(st_.v["w"], 0.999 * np.array([0.2, 0.2]))
    fresh, _ = adam_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params))
    assert np.array_equal(fresh["w"], params["w"])


def test_adam_matches_scalar_reference():
    rng = np.random.default_rng(4)
    params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=4)}
    state = AdamState.zeros_like(params, lr=1e-3)
    ref = {k: [(float(p), 0.0, 0.0) for p in v.ravel()] for k, v in params.items()}
    for t in range(1, 6):
        grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
        params, state = adam_step(params, grads, state)
        for k in params:
            ref[k] = [oracles.adam_scalar(p, float(g), m, v, t, 1e-3) for (p, m, v), g in zip(ref[k], grads[k].ravel())]
            np.testing.assert_allclose(params[k].ravel(), [r[0] for r in ref[k]], rtol=0, atol=1e-12)
    assert state.step == 5


def test_adam_is_pure_and_deterministic():
    params = {"w": np.ones(3)}
    grads = {"w": np.array([0.1, -0.2, 0.3])}
    state = AdamState.zeros_like(params)
    a = adam_step(params, grads, state)
    b = adam_step(params, grads, state)
    assert np.array_equal(a[0]["w"], b[0]["w"])
    assert state.step == 0 and np.array_equal(params["w"], np.ones(3))


def test_adam_rejects_shape_mismatch():
    params = {"w": np.ones(3)}
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.ones(2)}, AdamState.zeros_like(params))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_single_adam_step_decreases_loss(seed):
    cfg = ModelConfig(seed=seed)
    params = init_params(cfg)
    rng = np.random.default_rng(seed)
    x = rng.random((64, 64, 4))
    target = (rng.random((16, 16, 4)) < 0.2).astype(float)
    ones = np.ones_like(target)

    def loss(p):
        a, o, cache = forward(p, x, cfg)
        value = wce_forward(a, target, ones, ones) + wce_forward(o, target, ones, ones)
        return value, a, o, cache

    before, a, o, cache = loss(params)
    grads = backward(params, cache, wce_backward(a, target, ones, ones), wce_backward(o, target, ones, ones))
    new, _ = adam_step(params, grads, AdamState.zeros_like(params, lr=1e-4))
    assert loss(new)[0] < before
