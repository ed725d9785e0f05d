import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import fd_gradient, random_params
from icoden.errors import SolverError
from icoden.net import MLPParams, NetworkShape
from icoden.ode import (
    AdjointState,
    ODEConfig,
    batch_solve,
    dopri5,
    integrate_grid,
    rk4,
    solve_adjoint,
    solve_cumhaz,
)

LN2 = math.log(2)


def zero_params(p=1, hidden=(8, 8)):
    shape = NetworkShape(p, hidden)
    return MLPParams(shape, np.zeros(shape.n_params))


@pytest.mark.parametrize("method", ["rk4", "dopri5"])
def test_constant_hazard(method):
    cfg = ODEConfig(method=method)
    assert solve_cumhaz(zero_params(), [0.0], 3.0, cfg) == pytest.approx(3 * LN2, abs=1e-8)


def test_linear_rhs_hook():
    lam = solve_cumhaz(zero_params(), [0.0], 1.0, rhs=lambda lam, t: lam + 1)
    assert lam == pytest.approx(math.e - 1, abs=1e-6)


def test_zero_time():
    assert solve_cumhaz(random_params(1, seed=3), [0.4], 0.0) == 0.0
    assert batch_solve(random_params(1, seed=3), np.zeros((1, 1)), [0.0])[0] == 0.0


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        solve_cumhaz(zero_params(), [0.0], -1.0)


def test_batch_constant_hazard():
    out = batch_solve(zero_params(), np.zeros((3, 1)), [1.0, 2.0, 4.0])
    np.testing.assert_allclose(out, np.array([1, 2, 4]) * LN2, atol=1e-8)


def test_batch_duplicates_identical():
    params = random_params(2, seed=5)
    out = batch_solve(params, np.tile([[0.3, -1.0]], (4, 1)), [1.7] * 4)
    assert len(set(out.tolist())) == 1


def test_batch_matches_sequential():
    rng = np.random.default_rng(11)
    params = random_params(3, seed=11)
    X, T = rng.normal(size=(50, 3)), rng.uniform(0, 5, 50)
    seq = np.array([solve_cumhaz(params, X[i], T[i]) for i in range(50)])
    assert np.max(np.abs(batch_solve(params, X, T) - seq)) <= 1e-9


def test_rescaling_matches_direct_time():
    # one grid point per row makes integrate_grid a direct-time RK4 with the same step count
    rng = np.random.default_rng(2)
    params = random_params(2, seed=2)
    X, T = rng.normal(size=(20, 2)), rng.uniform(0.1, 4, 20)
    direct = integrate_grid(params, X, T[:, None], ODEConfig(n_steps=32))[:, 0]
    assert np.max(np.abs(direct - batch_solve(params, X, T))) <= 1e-12


@given(seed=st.integers(0, 500), t1=st.floats(0, 5), dt=st.floats(0, 5))
@settings(max_examples=50, deadline=None)
def test_monotone_in_time(seed, t1, dt):
    params = random_params(2, seed=seed)
    x = np.random.default_rng(seed).normal(size=2)
    assert solve_cumhaz(params, x, t1) <= solve_cumhaz(params, x, t1 + dt)


def test_rk4_order():
    # smooth problem dy/dt = cos(t) y, y(0)=1
    f = lambda t, y: math.cos(t) * y
    ref = float(rk4(f, 1.0, 0.0, 3.0, 320))
    e1 = abs(float(rk4(f, 1.0, 0.0, 3.0, 16)) - ref)
    e2 = abs(float(rk4(f, 1.0, 0.0, 3.0, 32)) - ref)
    assert 8 <= e1 / e2 <= 32


def test_dopri5_accuracy_and_backward():
    f = lambda t, y: -2 * t * y
    assert float(dopri5(f, 1.0, 0.0, 2.0, rtol=1e-10, atol=1e-12)) == pytest.approx(math.exp(-4), rel=1e-8)
    assert float(dopri5(f, math.exp(-4), 2.0, 0.0, rtol=1e-10, atol=1e-12)) == pytest.approx(1.0, rel=1e-8)


def test_dopri5_step_cap():
    with pytest.raises(SolverError):
        dopri5(lambda t, y: 1e3 * np.sin(1e3 * t), 0.0, 0.0, 10.0, rtol=1e-12, atol=1e-14, max_steps=20)


def test_nonfinite_reports_diagnostics():
    # Λ' = Λ² + 1 blows up at t = π/2
    with pytest.raises(SolverError, match="t_eval"):
        solve_cumhaz(zero_params(), [0.0], 20.0, rhs=lambda lam, t: lam**2 + 1)


@pytest.mark.parametrize("method", ["rk4", "dopri5"])
def test_adjoint_zero_params_output_bias(method):
    cfg = ODEConfig(method=method, rtol=1e-10, atol=1e-12)
    lam, grad = solve_adjoint(zero_params(), [0.0], 1.0, cfg)
    assert lam == pytest.approx(LN2, abs=1e-9)
    assert grad[-1] == pytest.approx(0.5, abs=1e-6)


def _fd_cumhaz(params, x, t, cfg):
    return fd_gradient(lambda th: solve_cumhaz(params.with_flat(th), x, t, cfg), params.flat)


@pytest.mark.parametrize("seed", range(3))
def test_adjoint_matches_fd_rk4(seed):
    params = random_params(3, (8, 8), seed=100 + seed)
    x = np.random.default_rng(seed).normal(size=3)
    lam, grad = solve_adjoint(params, x, 1.5)
    fd = _fd_cumhaz(params, x, 1.5, ODEConfig())
    big = (np.abs(grad) > 1e-8) | (np.abs(fd) > 1e-8)
    assert np.max(np.abs(grad - fd)[big] / np.abs(fd)[big]) <= 1e-4
    assert lam == pytest.approx(solve_cumhaz(params, x, 1.5), abs=1e-9)


def _fine_rk4_grad(params, x, t):
    return solve_adjoint(params, x, t, ODEConfig(n_steps=4000))[1]


def test_adjoint_dopri5_smooth_net():
    # positive biases and small weights keep every ReLU active: a smooth vector field
    params = random_params(2, (6, 6), seed=7)
    flat = np.concatenate([np.concatenate([W.ravel() * 0.1, np.abs(b) + 3]) for W, b in params.layers])
    params = params.with_flat(flat)
    x = np.array([0.5, -0.2])
    cfg = ODEConfig(method="dopri5", rtol=1e-10, atol=1e-12)
    lam, grad = solve_adjoint(params, x, 1.0, cfg)
    np.testing.assert_allclose(grad, _fine_rk4_grad(params, x, 1.0), rtol=1e-8, atol=1e-10)
    assert lam == pytest.approx(solve_cumhaz(params, x, 1.0, cfg), abs=1e-9)


@pytest.mark.parametrize("seed", [7, 8, 9])
def test_adjoint_dopri5_generic_net(seed):
    # ReLU switches along the trajectory limit the continuous adjoint to ~1e-5
    params = random_params(2, (6, 6), seed=seed)
    x = np.array([0.5, -0.2])
    _, grad = solve_adjoint(params, x, 1.0, ODEConfig(method="dopri5", rtol=1e-10, atol=1e-12))
    ref = _fine_rk4_grad(params, x, 1.0)
    big = np.abs(ref) > 1e-6
    assert np.median(np.abs(grad - ref)[big] / np.abs(ref)[big]) <= 1e-4
    assert np.max(np.abs(grad - ref)) <= 1e-4 * np.max(np.abs(ref))


def test_adjoint_tiny_time():
    _, grad = solve_adjoint(random_params(2, seed=1), [0.1, 0.2], 1e-8)
    assert np.max(np.abs(grad)) <= 1e-7


def test_adjoint_state_start():
    st0 = AdjointState.start(2.5, 7)
    assert (st0.lambda_cum, st0.b) == (2.5, 1.0)
    assert np.all(st0.grad == 0) and st0.grad.size == 7
    back = AdjointState.unpack(st0.pack())
    assert back.lambda_cum == 2.5 and back.grad.size == 7


def test_config_validation():
    with pytest.raises(ValueError):
        ODEConfig(n_steps=0)
    with pytest.raises(ValueError):
        ODEConfig(method="euler")
    with pytest.raises(ValueError):
        ODEConfig(rtol=0)
