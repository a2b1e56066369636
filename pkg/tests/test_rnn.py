import numpy as np
import pytest
from hypothesis import given, strategies as st

from degenkit.exceptions import NumericFailure
from degenkit.rnn import HiddenTrajectory, Parameterization, RnnParams, forward, init_params

STD = Parameterization(width=6)
MUP = Parameterization(width=6, mode="mup", gamma=0.5, tau=0.7)


def test_standard_init_bounds():
    mode = Parameterization(width=128)
    p = init_params(128, 3, 2, mode, 0)
    bound = 1.0 / np.sqrt(128)
    for arr in (p.W_h, p.W_x, p.b, p.W_out, p.b_out):
        assert np.abs(arr).max() < bound


def test_init_deterministic_per_seed():
    a = init_params(6, 2, 1, STD, 42)
    b = init_params(6, 2, 1, STD, 42)
    for k in a.as_dict():
        assert np.array_equal(a.as_dict()[k], b.as_dict()[k])
    c = init_params(6, 2, 1, STD, 43)
    assert not np.array_equal(a.W_h, c.W_h)


def test_mup_recurrent_variance_scales_with_width():
    n = 256
    mode = Parameterization(width=n, mode="mup")
    p = init_params(n, 2, 1, mode, 7)
    var = p.W_h.var()
    assert abs(var - n) / n < 0.05  # Monte-Carlo estimate over 65536 entries


def test_mup_biases_zero_at_init():
    p = init_params(8, 2, 1, Parameterization(width=8, mode="mup"), 0)
    assert not p.b.any()
    assert not p.b_out.any()


def test_forward_zero_weights_constant_output():
    n, m, p_dim = 5, 2, 3
    c = np.array([0.5, -1.0, 2.0])
    params = RnnParams(
        W_h=np.zeros((n, n)), W_x=np.zeros((n, m)), b=np.zeros(n),
        W_out=np.zeros((p_dim, n)), b_out=c, param_mode=Parameterization(width=n),
    )
    out, traj = forward(params, np.random.default_rng(0).normal(size=(4, 10, m)))
    np.testing.assert_array_equal(traj.values, 0.0)
    np.testing.assert_allclose(out, np.broadcast_to(c, (4, 10, 3)))


def test_forward_single_unit_closed_form():
    params = RnnParams(
        W_h=np.zeros((1, 1)), W_x=np.ones((1, 1)), b=np.zeros(1),
        W_out=np.ones((1, 1)), b_out=np.zeros(1), param_mode=Parameterization(width=1),
    )
    out, traj = forward(params, np.full((1, 1, 1), 0.5))
    np.testing.assert_allclose(traj.values[0, 0, 0], np.tanh(0.5))
    np.testing.assert_allclose(out[0, 0, 0], np.tanh(0.5))


def test_mup_tau_one_reduces_to_direct_update():
    n, m = 5, 2
    mode = Parameterization(width=n, mode="mup", gamma=2.0, tau=1.0)
    params = init_params(n, m, 1, mode, 3)
    inputs = np.random.default_rng(1).normal(size=(3, 12, m))
    _, traj = forward(params, inputs)
    # direct evaluation: h_t = (1/n) W_h tanh(h_{t-1}) + W_x x_t  (b is zero)
    h = np.zeros((3, n))
    for t in range(12):
        h = np.tanh(h) @ params.W_h.T / n + inputs[:, t] @ params.W_x.T
        np.testing.assert_allclose(traj.values[:, t], h, atol=1e-12)


@given(st.integers(0, 10_000))
def test_standard_hidden_states_bounded(seed):
    rng = np.random.default_rng(seed)
    params = init_params(6, 2, 1, STD, seed)
    _, traj = forward(params, rng.normal(scale=5.0, size=(2, 20, 2)))
    assert np.all(np.abs(traj.values) < 1.0)


def test_forward_is_pure():
    params = init_params(6, 2, 2, MUP, 5)
    x = np.random.default_rng(2).normal(size=(3, 15, 2))
    o1, t1 = forward(params, x)
    o2, t2 = forward(params, x)
    assert np.array_equal(o1, o2)
    assert np.array_equal(t1.values, t2.values)


@pytest.mark.parametrize("mode", [STD, MUP])
def test_readout_scaling_is_exactly_linear(mode):
    params = init_params(6, 2, 2, mode, 9)
    x = np.random.default_rng(3).normal(size=(2, 8, 2))
    base, _ = forward(params, x)
    scaled = params.copy()
    scaled.W_out *= 3.0
    out, _ = forward(scaled, x)
    np.testing.assert_allclose(out - params.b_out, 3.0 * (base - params.b_out), atol=1e-12)


def test_linear_regime_matches_convolution():
    # identity activation + nilpotent recurrence: h_t = sum_j W_h^j (W_x x_{t-j} + b)
    n, m = 4, 2
    rng = np.random.default_rng(4)
    W_h = np.zeros((n, n))
    W_h[1, 0], W_h[2, 1], W_h[3, 2] = rng.normal(size=3)  # strictly lower shift
    params = RnnParams(
        W_h=W_h, W_x=rng.normal(size=(n, m)), b=rng.normal(size=n),
        W_out=rng.normal(size=(2, n)), b_out=rng.normal(size=2),
        param_mode=Parameterization(width=n),
    )
    x = rng.normal(size=(3, 9, m))
    out, traj = forward(params, x, activation=lambda z: z)
    powers = [np.eye(n)]
    for _ in range(3):
        powers.append(W_h @ powers[-1])
    for t in range(9):
        expect = sum(
            powers[j] @ (params.W_x @ x[:, t - j].T + params.b[:, None])
            for j in range(min(t + 1, 4))
        ).T
        np.testing.assert_allclose(traj.values[:, t], expect, atol=1e-10)
    np.testing.assert_allclose(out, traj.values @ params.W_out.T + params.b_out, atol=1e-10)


def test_shape_mismatch_raises():
    params = init_params(6, 2, 1, STD, 0)
    with pytest.raises(ValueError):
        forward(params, np.zeros((2, 5, 3)))
    with pytest.raises(ValueError):
        forward(params, np.zeros((2, 5)))


def test_nonfinite_activation_reports_step():
    params = RnnParams(
        W_h=np.array([[2.0]]), W_x=np.ones((1, 1)), b=np.zeros(1),
        W_out=np.ones((1, 1)), b_out=np.zeros(1), param_mode=Parameterization(width=1),
    )
    with np.errstate(over="ignore"), pytest.raises(NumericFailure) as err:
        forward(params, np.ones((1, 2000, 1)), activation=lambda z: z)
    assert err.value.step is not None


def test_params_validation():
    with pytest.raises(ValueError):
        RnnParams(
            W_h=np.zeros((3, 4)), W_x=np.zeros((3, 1)), b=np.zeros(3),
            W_out=np.zeros((1, 3)), b_out=np.zeros(1), param_mode=Parameterization(width=3),
        )
    with pytest.raises(ValueError):
        RnnParams(
            W_h=np.full((2, 2), np.nan), W_x=np.zeros((2, 1)), b=np.zeros(2),
            W_out=np.zeros((1, 2)), b_out=np.zeros(1), param_mode=Parameterization(width=2),
        )
    with pytest.raises(ValueError):
        init_params(4, 2, 1, Parameterization(width=8), 0)
    with pytest.raises(ValueError):
        Parameterization(width=4, tau=0.0)
    with pytest.raises(ValueError):
        Parameterization(width=4, gamma=-1.0)


def test_trajectory_flatten():
    traj = HiddenTrajectory(np.arange(24.0).reshape(2, 3, 4))
    assert traj.flatten().shape == (6, 4)
