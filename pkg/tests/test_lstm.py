import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compliance_core.errors import NonFiniteError, ShapeMismatchError, StaleCacheError
from compliance_core.lstm import GATES, init_lstm_params, lstm_backward, lstm_cell, lstm_forward
from compliance_core.training import gradient_check


def zero_params(hidden=4, fc_size=5):
    p = init_lstm_params(hidden, fc_size, rng=np.random.default_rng(0))
    return {name: np.zeros_like(arr) for name, arr in p.items()}


def test_zero_cell_is_half_open():
    p = zero_params()
    h, c = lstm_cell(p, np.zeros(3), np.zeros(4), np.zeros(4))
    np.testing.assert_array_equal(h, np.zeros(4))
    np.testing.assert_array_equal(c, np.zeros(4))


def test_zero_weights_halve_the_cell_state():
    p = zero_params()
    v = np.array([-2.0, -0.5, 0.5, 3.0])
    h, c = lstm_cell(p, np.ones(3), np.zeros(4), v)
    np.testing.assert_allclose(c, 0.5 * v, atol=1e-15)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * v), atol=1e-15)


def test_zero_network_predicts_zero():
    out, _ = lstm_forward(zero_params(), np.zeros((6, 3)))
    np.testing.assert_array_equal(out, np.zeros(3))


def test_forget_bias_starts_at_one():
    p = init_lstm_params(8, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(p["b_f"], np.ones(8))
    assert set(p) >= {f"W_q{g}" for g in GATES} | {"W_fc", "b_fc", "W_out", "b_out"}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50.0))
def test_hidden_state_is_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    p = init_lstm_params(6, 4, rng=rng)
    h = c = np.zeros(6)
    for q_t in rng.normal(scale=scale, size=(20, 3)):
        h, c = lstm_cell(p, q_t, h, c)
        assert np.all(np.abs(h) <= 1.0)


def test_batched_forward_matches_single_windows():
    rng = np.random.default_rng(1)
    p = init_lstm_params(6, 7, rng=rng)
    windows = rng.normal(size=(4, 9, 3))
    batched, _ = lstm_forward(p, windows)
    for b in range(4):
        single, _ = lstm_forward(p, windows[b])
        np.testing.assert_allclose(batched[b], single, atol=1e-12)


def test_forward_consumes_oldest_first():
    rng = np.random.default_rng(2)
    p = init_lstm_params(5, 4, rng=rng)
    window = rng.normal(size=(7, 3))
    out, _ = lstm_forward(p, window)

    h = c = np.zeros(5)
    for q_t in window[::-1]:
        h, c = lstm_cell(p, q_t, h, c)
    expected = p["W_out"] @ (p["W_fc"] @ h + p["b_fc"]) + p["b_out"]
    np.testing.assert_allclose(out, expected, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_bptt_matches_central_differences(seed):
    rng = np.random.default_rng(seed)
    p = init_lstm_params(8, 6, rng=rng)
    windows = rng.normal(size=(2, 10, 3))
    targets = rng.normal(size=(2, 3))
    worst, _ = gradient_check(p, windows, targets, eps=1e-5, kind="lstm")
    assert worst < 1e-4


def test_zero_loss_grad_gives_zero_gradients():
    rng = np.random.default_rng(4)
    p = init_lstm_params(4, 3, rng=rng)
    _, cache = lstm_forward(p, rng.normal(size=(5, 3)))
    grads = lstm_backward(cache, np.zeros(3))
    assert list(grads) == list(p)
    for name, g in grads.items():
        assert g.shape == p[name].shape
        assert not np.any(g)


def test_stale_cache_rejected():
    rng = np.random.default_rng(5)
    p = init_lstm_params(4, 3, rng=rng)
    _, cache = lstm_forward(p, rng.normal(size=(5, 3)))
    p["W_hi"][0, 0] += 1.0
    with pytest.raises(StaleCacheError):
        lstm_backward(cache, np.ones(3))


def test_shape_mismatch_rejected():
    p = init_lstm_params(4, 3, rng=np.random.default_rng(0))
    with pytest.raises(ShapeMismatchError):
        lstm_cell(p, np.zeros(3), np.zeros(5), np.zeros(5))
    with pytest.raises(ShapeMismatchError):
        lstm_forward(p, np.zeros((5, 4)))


def test_non_finite_activation_reports_step():
    p = init_lstm_params(4, 3, rng=np.random.default_rng(0))
    window = np.zeros((6, 3))
    # Newest-first: row 2 is consumed at step 3
    window[2, 0] = np.nan
    with pytest.raises(NonFiniteError) as exc:
        lstm_forward(p, window)
    assert exc.value.step == 3


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_output_depends_on_window_order(seed):
    rng = np.random.default_rng(seed)
    p = init_lstm_params(6, 4, rng=rng)
    window = rng.normal(size=(8, 3))
    forward, _ = lstm_forward(p, window)
    reversed_, _ = lstm_forward(p, window[::-1])
    assert not np.allclose(forward, reversed_, rtol=0.0, atol=1e-12)
