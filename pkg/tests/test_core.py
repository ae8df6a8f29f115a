import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safectl.core import (
    DIRECT,
    DISTURBANCE_ACTION,
    STATE_FEEDBACK,
    ControlAffineSystem,
    LtvSystem,
    NoiseBound,
    PolicyParams,
    Polytope,
    QuadraticLoss,
    Schedule,
    input_matrix,
    loss_eval,
    loss_grad_xu,
    polytope_contains,
    policy_to_input,
    step,
    step_affine,
    step_ltv,
)
from safectl.errors import ConfigError, DimensionError, HistoryError, ModelEvalError

finite = st.floats(-10, 10, allow_nan=False)


def scalar_sys():
    return LtvSystem.scalar(0.9, 0.6)


# step_ltv / step_affine

def test_step_ltv_examples():
    s = scalar_sys()
    assert step_ltv(s, 1, [1.0], [0.5], [0.1])[0] == pytest.approx(1.3, abs=1e-15)
    assert step_ltv(s, 1, [0.0], [0.0], [0.0])[0] == 0.0
    assert step_ltv(s, 1, [2.0], [-2.5], [-1.0])[0] == pytest.approx(-0.7, abs=1e-15)


def test_step_ltv_dimension_error():
    with pytest.raises(DimensionError):
        step_ltv(scalar_sys(), 1, [1.0, 2.0], [0.0], [0.0])
    with pytest.raises(DimensionError):
        step_ltv(scalar_sys(), 1, [1.0], [0.0, 1.0], [0.0])


def test_ltv_schedule_table_and_norm_bound():
    s = LtvSystem(Schedule.table([[[0.5]], [[0.7]]]), [[1.0]])
    assert step_ltv(s, 2, [1.0], [0.0], [0.0])[0] == 0.7
    with pytest.raises((ConfigError, ValueError)):
        LtvSystem([[2.0]], [[1.0]], kappa_A=1.0)


def test_step_affine_examples():
    lin = ControlAffineSystem(lambda x: 0.9 * x, lambda x: np.array([[0.6]]), 1, 1)
    assert step_affine(lin, [1.0], [0.5], [0.1])[0] == pytest.approx(1.3, abs=1e-15)
    sine = ControlAffineSystem(lambda x: np.sin(x), lambda x: np.array([[1.0]]), 1, 1)
    assert step_affine(sine, [np.pi / 2], [-1.0], [0.0])[0] == pytest.approx(0.0, abs=1e-15)


def test_step_affine_pendulum_equilibrium():
    from safectl.bench.pendulum import pendulum_system

    p = pendulum_system()
    assert np.array_equal(step(p, 1, [0.0, 0.0], [0.0], [0.0, 0.0]), [0.0, 0.0])


def test_step_affine_callback_failure():
    def bad(x):
        if x[0] > 0:
            raise RuntimeError("boom")
        return x

    s = ControlAffineSystem(bad, lambda x: np.array([[1.0]]), 1, 1)
    with pytest.raises(ModelEvalError):
        step_affine(s, [1.0], [0.0], [0.0])
    with pytest.raises(ModelEvalError):
        ControlAffineSystem(lambda x: x / 0.0, lambda x: np.array([[1.0]]), 1, 1)


@settings(max_examples=100, deadline=None)
@given(finite, finite, finite, finite, finite, finite, st.floats(0, 1))
def test_step_ltv_affine_in_arguments(x1, x2, u1, u2, w1, w2, a):
    s = scalar_sys()
    mix = step_ltv(s, 1, [a * x1 + (1 - a) * x2], [a * u1 + (1 - a) * u2], [a * w1 + (1 - a) * w2])
    sep = a * step_ltv(s, 1, [x1], [u1], [w1]) + (1 - a) * step_ltv(s, 1, [x2], [u2], [w2])
    assert mix[0] == pytest.approx(sep[0], abs=1e-12)


# polytope_contains

def test_polytope_contains_examples():
    P = Polytope([[1.0], [-1.0]], [2.0, 2.0])
    assert polytope_contains(P, [1.99], 0.0)
    assert not polytope_contains(P, [2.01], 0.0)
    assert polytope_contains(P, [2.005], 0.01)


def test_polytope_row_mismatch():
    with pytest.raises(DimensionError):
        Polytope([[1.0], [-1.0]], [2.0])


def test_polytope_balls():
    P = Polytope(np.zeros((0, 2)), np.zeros(0), ball_radius=1.0)
    assert P.contains([0.6, 0.8], 1e-12)
    assert not P.contains([0.8, 0.8])
    S = Polytope(np.zeros((0, 4)), np.zeros(0), spectral_radius=1.0, spectral_shape=(2, 2))
    assert S.contains([1.0, 0.0, 0.0, 1.0], 1e-12)
    assert not S.contains([2.0, 0.0, 0.0, 0.1])


@settings(max_examples=100, deadline=None)
@given(finite, st.floats(0, 1), st.floats(0, 1))
def test_polytope_contains_monotone_in_tol(z, t1, extra):
    P = Polytope([[1.0], [-1.0]], [2.0, 2.0])
    if polytope_contains(P, [z], t1):
        assert polytope_contains(P, [z], t1 + extra)


def test_noise_bound_nonnegative():
    NoiseBound(0.0)
    with pytest.raises(ConfigError):
        NoiseBound(-1.0)


# losses

def test_loss_eval_examples():
    c = QuadraticLoss([[1.0]], [[1.0]])
    assert loss_eval(c, [1.3], [0.5]) == pytest.approx(1.94, abs=1e-14)
    assert loss_eval(c, [0.0], [0.0]) == 0.0
    pend = QuadraticLoss(np.diag([1.0, 0.1]), [[0.001]])
    assert loss_eval(pend, [0.2, 1.0], [2.0]) == pytest.approx(0.144, abs=1e-14)


def test_loss_dimension_error():
    with pytest.raises(DimensionError):
        loss_eval(QuadraticLoss([[1.0]], [[1.0]]), [1.0, 2.0], [0.0])


def test_loss_rejects_asymmetric_or_indefinite():
    with pytest.raises(ConfigError):
        QuadraticLoss([[1.0, 1.0], [0.0, 1.0]], [[1.0]])
    with pytest.raises(ConfigError):
        QuadraticLoss([[-1.0]], [[1.0]])


def test_loss_grad_examples():
    c = QuadraticLoss([[1.0]], [[1.0]])
    gx, gu = loss_grad_xu(c, [1.3], [0.5])
    assert gx[0] == pytest.approx(2.6, abs=1e-15) and gu[0] == pytest.approx(1.0, abs=1e-15)
    gx, gu = loss_grad_xu(c, [0.0], [0.0])
    assert gx[0] == 0 and gu[0] == 0
    gx, _ = loss_grad_xu(QuadraticLoss(np.diag([1.0, 0.1]), [[1.0]]), [1.0, 1.0], [0.0])
    assert gx == pytest.approx([2.0, 0.2], abs=1e-15)


def _random_loss(rng, d_x, d_u):
    A = rng.standard_normal((d_x, d_x))
    B = rng.standard_normal((d_u, d_u))
    return QuadraticLoss(A @ A.T, B @ B.T)


def test_loss_grad_matches_central_differences():
    rng = np.random.default_rng(7)
    for _ in range(100):
        d_x, d_u = rng.integers(1, 4), rng.integers(1, 3)
        c = _random_loss(rng, d_x, d_u)
        x, u = rng.standard_normal(d_x), rng.standard_normal(d_u)
        gx, gu = loss_grad_xu(c, x, u)
        z = np.concatenate([x, u])
        h = 1e-6
        fd = np.empty_like(z)
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = h
            fd[i] = (loss_eval(c, (z + e)[:d_x], (z + e)[d_x:])
                     - loss_eval(c, (z - e)[:d_x], (z - e)[d_x:])) / (2 * h)
        g = np.concatenate([gx, gu])
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=6, max_size=6), st.floats(0, 1))
def test_loss_convex(vals, a):
    c = QuadraticLoss(np.diag([1.0, 0.1]), [[0.5]])
    z1, z2 = np.array(vals[:3]), np.array(vals[3:])
    zm = a * z1 + (1 - a) * z2
    f = lambda z: loss_eval(c, z[:2], z[2:])
    assert f(zm) <= a * f(z1) + (1 - a) * f(z2) + 1e-12 * (1 + abs(f(z1)) + abs(f(z2)))


# policies

def test_policy_to_input_examples():
    assert policy_to_input(PolicyParams(STATE_FEEDBACK, 0.5), [2.0])[0] == -1.0
    p = PolicyParams(DISTURBANCE_ACTION, np.array([1.0, -1.0]).reshape(2, 1, 1))
    assert policy_to_input(p, None, [[0.3], [0.1]])[0] == pytest.approx(0.2, abs=1e-15)
    assert policy_to_input(PolicyParams(DIRECT, [1.5]))[0] == 1.5


def test_policy_missing_history():
    p = PolicyParams(DISTURBANCE_ACTION, np.ones((2, 1, 1)))
    assert policy_to_input(p, None, [[0.3]])[0] == pytest.approx(0.3)
    with pytest.raises(HistoryError):
        policy_to_input(p, None, [[0.3]], zero_pad=False)


def test_policy_norm_bound_enforced():
    with pytest.raises(ConfigError):
        PolicyParams(STATE_FEEDBACK, [[3.0]], kappa=2.5)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([DIRECT, STATE_FEEDBACK, DISTURBANCE_ACTION]), st.integers(0, 2**31))
def test_input_matrix_matches_policy(kind, seed):
    rng = np.random.default_rng(seed)
    d_x, d_u, H = 3, 2, 2
    shape = {DIRECT: (d_u,), STATE_FEEDBACK: (d_u, d_x), DISTURBANCE_ACTION: (H, d_u, d_x)}[kind]
    theta = rng.standard_normal(shape)
    x = rng.standard_normal(d_x)
    hist = [rng.standard_normal(d_x) for _ in range(H)]
    u = policy_to_input(PolicyParams(kind, theta), x, hist)
    assert np.allclose(input_matrix(kind, shape, x, hist) @ theta.reshape(-1), u, atol=1e-12)
