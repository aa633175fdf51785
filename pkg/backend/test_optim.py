"""
Tests for Adam, weight decay and global-norm clipping.
"""

import numpy as np
import pytest

from services.optim import AdamState, adam_step, clip_by_global_norm, global_norm
from utils.errors import ShapeMismatch
from utils.logger import get_logger

logger = get_logger("test_optim")


def test_zero_gradient_keeps_parameters():
    params = {"x": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(params, {"x": np.zeros(2)}, state, lr=0.1)
    np.testing.assert_array_equal(params["x"], [1.0, -2.0])
    assert state.t == 1


def test_first_step_moves_by_learning_rate():
    params = {"x": np.array([0.5, 0.5, 0.5])}
    adam_step(params, {"x": np.ones(3)}, AdamState(), lr=0.01)
    np.testing.assert_allclose(params["x"], 0.5 - 0.01, rtol=0, atol=1e-9)


def test_quadratic_bowl_converges():
    params = {"x": np.array([1.0, -2.0, 0.5])}
    state = AdamState()
    for _ in range(500):
        adam_step(params, {"x": params["x"].copy()}, state, lr=0.1)
    assert np.linalg.norm(params["x"]) < 1e-3


def test_weight_decay_shrinks_parameters():
    params = {"x": np.array([2.0])}
    adam_step(params, {"x": np.zeros(1)}, AdamState(), lr=0.1, weight_decay=0.5)
    assert params["x"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_clipping_rescales_to_max_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([[0.0, 4.0]])}
    assert global_norm(grads) == pytest.approx(5.0)
    clipped = clip_by_global_norm(grads, 1.0)
    assert global_norm(clipped) == pytest.approx(1.0)
    assert clip_by_global_norm(grads, 10.0) is grads
    assert clip_by_global_norm(grads, None) is grads


def test_state_round_trips_through_tensors():
    params = {"w": np.array([1.0, 2.0])}
    state = AdamState()
    adam_step(params, {"w": np.array([0.3, -0.1])}, state, lr=0.1)
    restored = AdamState.from_tensors(state.tensors(), t=state.t)
    np.testing.assert_array_equal(restored.m["w"], state.m["w"])
    np.testing.assert_array_equal(restored.v["w"], state.v["w"])
    assert restored.t == 1


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        adam_step({"x": np.zeros(2)}, {"y": np.zeros(2)}, AdamState(), lr=0.1)
    with pytest.raises(ShapeMismatch):
        adam_step({"x": np.zeros(2)}, {"x": np.zeros(3)}, AdamState(), lr=0.1)
