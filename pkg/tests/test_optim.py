import numpy as np
import pytest

from almeta.errors import NumericFault
from almeta.optim import AdamState, adam_step


def test_first_step_is_signed_learning_rate():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    grads = {"w": np.array([0.5, -0.1, 2.0])}
    state = AdamState(lr=0.1)
    adam_step(params, grads, state)
    assert np.allclose(params["w"], np.array([1.0, -2.0, 3.0]) - 0.1 * np.sign(grads["w"]), atol=1e-6)
    assert state.t == 1


def test_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, 2.0])}
    state = AdamState(lr=0.1)
    adam_step(params, {"w": np.zeros(2)}, state)
    assert np.allclose(params["w"], [1.0, 2.0])


def test_quadratic_descends_two_steps():
    w = np.array([1.0])
    params = {"w": w}
    state = AdamState(lr=0.1)
    history = [w.copy()]
    for _ in range(2):
        adam_step(params, {"w": 2.0 * w}, state)
        history.append(w.copy())
    assert history[1] < history[0] and history[2] < history[1]


def test_nonfinite_gradient_skips_update():
    params = {"w": np.array([1.0]), "u": np.array([2.0])}
    state = AdamState(lr=0.1)
    with pytest.raises(NumericFault, match="u"):
        adam_step(params, {"w": np.array([1.0]), "u": np.array([np.nan])}, state)
    assert np.allclose(params["w"], [1.0]) and np.allclose(params["u"], [2.0])
    assert state.t == 0
