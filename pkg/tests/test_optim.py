import numpy as np
import pytest

from fixed_dg.errors import ShapeError
from fixed_dg.optim import AdamState, adam_step


def test_zero_gradient_zero_decay_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState(weight_decay=0.0)
    adam_step(params, {"w": np.zeros(3)}, state)
    assert np.array_equal(params["w"], [1.0, -2.0, 3.0])


def test_step_counter_increments():
    state = AdamState(weight_decay=0.0)
    assert state.step_count == 0
    adam_step({"w": np.ones(1)}, {"w": np.ones(1)}, state)
    assert state.step_count == 1


def test_single_step_matches_hand_computed_reference():
    # independent hand calculation for p=1.0, g=1.0, lr=1e-2, default betas, wd=0:
    # m = 0.1, v = 0.001, m_hat = 1.0, v_hat = 1.0,
    # p' = 1 - 0.01 * 1 / (1 + 1e-8)
    expected = 1.0 - 0.01 * (0.1 / (1 - 0.9)) / (np.sqrt(0.001 / (1 - 0.999)) + 1e-8)
    params = {"w": np.array(1.0)}
    adam_step(params, {"w": np.array(1.0)}, AdamState(lr=1e-2, weight_decay=0.0))
    assert abs(float(params["w"]) - expected) < 1e-15


def test_decoupled_weight_decay_shrinks_even_with_zero_grad():
    params = {"w": np.array(2.0)}
    state = AdamState(lr=1e-2, weight_decay=0.1)
    adam_step(params, {"w": np.array(0.0)}, state)
    assert abs(float(params["w"]) - (2.0 - 1e-2 * 0.1 * 2.0)) < 1e-15


def test_moment_buffers_match_param_shapes():
    params = {"w": np.ones((3, 4)), "b": np.ones(4)}
    grads = {"w": np.ones((3, 4)), "b": np.ones(4)}
    state = AdamState()
    adam_step(params, grads, state)
    assert state.m["w"].shape == (3, 4) and state.v["b"].shape == (4,)


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError, match="adam_step"):
        adam_step({"w": np.ones(3)}, {"w": np.ones(4)}, AdamState())


def test_deterministic_given_inputs():
    def run():
        params = {"w": np.linspace(-1, 1, 5)}
        state = AdamState()
        for step in range(10):
            adam_step(params, {"w": np.sin(params["w"] + step)}, state)
        return params["w"]

    assert np.array_equal(run(), run())
