import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actorhoi.config import LossConfig
from actorhoi.loss import total_loss, wce_backward, wce_forward

import oracles


def _instance(rng, shape=(4, 4, 3), lo=0.05, hi=0.95):
    pred = rng.uniform(lo, hi, shape)
    target = (rng.random(shape) < 0.3).astype(float)
    w_han = rng.uniform(0.1, 1.0, shape)
    w_scale = rng.uniform(1.0, 10.0, shape)
    return pred, target, w_han, w_scale


def test_half_prediction_gives_ln2_per_entry():
    rng = np.random.default_rng(0)
    target = (rng.random((5, 6, 4)) < 0.5).astype(float)
    ones = np.ones_like(target)
    assert wce_forward(np.full_like(target, 0.5), target, ones, ones) == pytest.approx(120 * math.log(2), rel=1e-14)


def test_perfect_prediction_is_near_zero():
    target = np.zeros((3, 3, 2))
    target[1, 1, 0] = 1.0
    ones = np.ones_like(target)
    loss = wce_forward(target.copy(), target, ones, ones, eps=1e-7)
    assert 0.0 <= loss <= 18 * -math.log(1 - 1e-7) + 1e-15


def test_matches_scalar_reference():
    rng = np.random.default_rng(1)
    for _ in range(20):
        args = _instance(rng)
        assert wce_forward(*args) == pytest.approx(oracles.wce_reference(*args), rel=0, abs=1e-12)


def test_forward_nearly_order_independent():
    rng = np.random.default_rng(2)
    args = _instance(rng, (6, 5, 4))
    perm = rng.permutation(6 * 5 * 4)
    shuffled = [a.reshape(-1)[perm].reshape(6, 5, 4) for a in args]
    assert wce_forward(*shuffled) == pytest.approx(wce_forward(*args), rel=0, abs=1e-12)


def test_forward_is_repeatable():
    args = _instance(np.random.default_rng(5), (16, 16, 4))
    assert wce_forward(*args) == wce_forward(*[a.copy() for a in args])


@pytest.mark.parametrize("f, grad", [(1.0, -2.0), (0.0, 2.0)])
def test_backward_examples(f, grad):
    one = np.ones((1, 1, 1))
    assert wce_backward(one * 0.5, one * f, one, one)[0, 0, 0] == grad


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(10):
        pred, target, w_han, w_scale = _instance(rng, (3, 3, 2))
        grad = wce_backward(pred, target, w_han, w_scale)
        for idx in np.ndindex(pred.shape):
            fd = oracles.central_difference(lambda: wce_forward(pred, target, w_han, w_scale), pred, idx)
            assert abs(fd - grad[idx]) <= 1e-6 * max(abs(grad[idx]), 1e-12)


def test_saturated_predictions_have_zero_gradient():
    pred = np.array([[[0.0, 1.0, 0.5]]])
    target = np.array([[[1.0, 0.0, 1.0]]])
    one = np.ones_like(pred)
    grad = wce_backward(pred, target, one, one)
    assert grad[0, 0, 0] == 0.0 and grad[0, 0, 1] == 0.0 and grad[0, 0, 2] == -2.0
    assert math.isfinite(wce_forward(pred, target, one, one))


def test_shape_mismatch_raises():
    a = np.full((2, 2, 2), 0.5)
    with pytest.raises(ValueError):
        wce_forward(a, a, a, np.ones((2, 2, 3)))
    with pytest.raises(ValueError):
        wce_backward(a, a[:1], a, a)


def test_unit_weights_equal_plain_bce():
    rng = np.random.default_rng(4)
    pred, target, _, _ = _instance(rng)
    bce = -np.sum(target * np.log(pred) + (1 - target) * np.log(1 - pred))
    one = np.ones_like(pred)
    assert wce_forward(pred, target, one, one) == pytest.approx(bce, rel=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 2.0, 4.0, 0.125]))
def test_linear_in_weights(seed, k):
    pred, target, w_han, w_scale = _instance(np.random.default_rng(seed))
    # powers of two keep the scaling exact
    assert wce_forward(pred, target, w_han, k * w_scale) == k * wce_forward(pred, target, w_han, w_scale)
    assert np.array_equal(wce_backward(pred, target, w_han, k * w_scale), k * wce_backward(pred, target, w_han, w_scale))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_loss_non_negative(seed):
    rng = np.random.default_rng(seed)
    pred, target, w_han, w_scale = _instance(rng, lo=0.0, hi=1.0)
    assert wce_forward(pred, target, w_han, w_scale) >= 0.0


@pytest.mark.parametrize(
    "la, lo, cfg, expected",
    [
        (3.0, 5.0, LossConfig(), 8.0),
        (3.0, 5.0, LossConfig(lambda_actor=0.0), 5.0),
        (0.0, 0.0, LossConfig(lambda_actor=2.0, lambda_object=3.0), 0.0),
    ],
)
def test_total_loss(la, lo, cfg, expected):
    assert total_loss(la, lo, cfg) == expected


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(lambda_actor=-1.0).validate()
    with pytest.raises(ValueError):
        LossConfig(eps=0.5).validate()
