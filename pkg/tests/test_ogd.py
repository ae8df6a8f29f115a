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
    Polytope,
    QuadraticLoss,
)
from safectl.ogd import (
    default_diameter,
    default_step_size,
    empirical_gradient_bound,
    ogd_init,
    ogd_step,
    policy_grad,
    policy_loss,
)
from safectl.safeset import SafeDecisionSet

SYS = LtvSystem.scalar(0.9, 0.6)
C = QuadraticLoss([[1.0]], [[1.0]])


def interval(lo, hi, shape=(1, 1)):
    return SafeDecisionSet(Polytope([[1.0], [-1.0]], [hi, -lo]), shape)


def test_policy_loss_examples():
    assert policy_loss(C, SYS, 1, [1.0], [0.0], [[1.0]]) == pytest.approx(1.09, abs=1e-15)
    K = 0.9 / 0.6
    assert policy_loss(C, SYS, 1, [2.0], [0.0], [[K]]) == pytest.approx((K * 2.0) ** 2, abs=1e-12)
    for K in (-3.0, 0.0, 2.0):
        assert policy_loss(C, SYS, 1, [0.0], [0.7], [[K]]) == pytest.approx(0.49, abs=1e-15)


def test_policy_grad_examples():
    assert policy_grad(C, SYS, 1, [1.0], [0.0], [[1.0]])[0, 0] == pytest.approx(1.64, abs=1e-14)
    assert policy_grad(C, SYS, 1, [0.0], [0.3], [[1.7]])[0, 0] == 0.0


def test_policy_grad_hand_value_against_finite_difference():
    h = 1e-6
    f = lambda k: policy_loss(C, SYS, 1, [1.0], [0.0], [[k]])
    assert (f(1 + h) - f(1 - h)) / (2 * h) == pytest.approx(1.64, abs=1e-8)


def _random_problem(rng, kind):
    d_x, d_u, H = int(rng.integers(1, 4)), int(rng.integers(1, 3)), 2
    A = rng.uniform(-1, 1, (d_x, d_x))
    B = rng.uniform(-1, 1, (d_x, d_u))
    sys = LtvSystem(A, B)
    Q = rng.standard_normal((d_x, d_x))
    R = rng.standard_normal((d_u, d_u))
    c = QuadraticLoss(Q @ Q.T, R @ R.T)
    shape = {DIRECT: (d_u,), STATE_FEEDBACK: (d_u, d_x), DISTURBANCE_ACTION: (H, d_u, d_x)}[kind]
    hist = [rng.standard_normal(d_x) for _ in range(H)]
    return sys, c, shape, rng.standard_normal(d_x), rng.standard_normal(d_x), hist


def fd_grad(c, sys, x, w, theta, kind, hist, h=1e-6):
    flat = theta.reshape(-1)
    g = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        g[i] = (policy_loss(c, sys, 1, x, w, (flat + e).reshape(theta.shape), kind, hist)
                - policy_loss(c, sys, 1, x, w, (flat - e).reshape(theta.shape), kind, hist)) / (2 * h)
    return g.reshape(theta.shape)


@pytest.mark.parametrize("kind", [DIRECT, STATE_FEEDBACK, DISTURBANCE_ACTION])
def test_policy_grad_matches_finite_differences(kind):
    rng = np.random.default_rng(1)
    for _ in range(30):
        sys, c, shape, x, w, hist = _random_problem(rng, kind)
        theta = rng.standard_normal(shape)
        g = policy_grad(c, sys, 1, x, w, theta, kind, hist)
        fd = fd_grad(c, sys, x, w, theta, kind, hist)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(g))


def test_generic_loss_uses_finite_differences():
    class Huberish:
        def __call__(self, x_next, u):
            return float(np.sum(np.sqrt(1 + x_next ** 2)) + np.sum(u ** 2))

    pend = ControlAffineSystem(lambda x: np.array([x[0] + 0.05 * x[1], x[1]]),
                               lambda x: np.array([[0.0], [0.15]]), 2, 1)
    K = np.array([[1.0, 0.5]])
    g = policy_grad(Huberish(), pend, 1, [0.3, -0.2], [0.0, 0.0], K)
    fd = fd_grad(Huberish(), pend, [0.3, -0.2], [0.0, 0.0], K, STATE_FEEDBACK, ())
    assert np.allclose(g, fd, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([DIRECT, STATE_FEEDBACK]), st.floats(0, 1))
def test_policy_loss_convex_along_lines(seed, kind, a):
    rng = np.random.default_rng(seed)
    sys, c, shape, x, w, hist = _random_problem(rng, kind)
    k1, k2 = rng.standard_normal(shape), rng.standard_normal(shape)
    f = lambda k: policy_loss(c, sys, 1, x, w, k, kind, hist)
    lhs = f(a * k1 + (1 - a) * k2)
    assert lhs <= a * f(k1) + (1 - a) * f(k2) + 1e-12 * (1 + abs(f(k1)) + abs(f(k2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_directional_derivative_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    sys, c, shape, x, w, hist = _random_problem(rng, STATE_FEEDBACK)
    k0, d = rng.standard_normal(shape), rng.standard_normal(shape)
    slopes = [np.vdot(policy_grad(c, sys, 1, x, w, k0 + s * d), d) for s in np.linspace(-2, 2, 9)]
    assert np.all(np.diff(slopes) >= -1e-9 * (1 + np.abs(slopes[:-1])))


def test_default_step_size_examples():
    assert default_step_size(100, 1, 1) == pytest.approx(0.1, abs=1e-16)
    assert default_step_size(400, 2, 1) == pytest.approx(0.1, abs=1e-16)
    assert default_step_size(4 * 37, 1.3, 0.7) == pytest.approx(0.5 * default_step_size(37, 1.3, 0.7))
    with pytest.raises(ValueError):
        default_step_size(0, 1, 1)


def test_default_diameter():
    assert default_diameter(STATE_FEEDBACK, 5.0, 1, 1) == 10.0
    assert default_diameter(STATE_FEEDBACK, 2.0, 2, 3) == pytest.approx(4 * np.sqrt(2))
    assert default_diameter(DIRECT, None, 1, 2, input_bound=4.0) == 8.0


def test_empirical_gradient_bound_is_deterministic_and_covers_samples():
    sampler = lambda rng: rng.uniform(-2, 2, 1)
    G1 = empirical_gradient_bound(C, SYS, STATE_FEEDBACK, (1, 1), sampler, 1.0, 5.0)
    G2 = empirical_gradient_bound(C, SYS, STATE_FEEDBACK, (1, 1), sampler, 1.0, 5.0)
    assert G1 == G2
    # the largest gradient on |x| <= 2, |K| <= 5, |w| <= 1 is at a corner
    corner = abs(policy_grad(C, SYS, 1, [2.0], [1.0], [[-5.0]])[0, 0])
    assert corner / 1.5 * 0.9 <= G1 / 1.5 <= corner


def test_ogd_step_examples():
    S = interval(0.0, 2.5)
    st0 = ogd_init([[1.0]], STATE_FEEDBACK, 0.1, S)
    st1, zeta = ogd_step(st0, [[1.64]], S)
    assert st1.theta[0, 0] == pytest.approx(0.836, abs=1e-15) and zeta == 0.0
    assert st1.step_index == 2 and st1.last_set is S

    st0 = ogd_init([[0.1]], STATE_FEEDBACK, 0.1, S)
    st1, zeta = ogd_step(st0, [[2.0]], S)
    assert st1.theta[0, 0] == 0.0 and zeta == 0.0
    st0 = ogd_init([[0.1]], STATE_FEEDBACK, 0.1, interval(-1.0, 2.5))
    st1, zeta = ogd_step(st0, [[2.0]], S)
    assert st1.theta[0, 0] == 0.0 and zeta == pytest.approx(0.1, abs=1e-15)


def test_zeta_zero_for_equal_descriptions():
    a, b = interval(0.0, 2.5), interval(0.0, 2.5)
    st0 = ogd_init([[2.4]], STATE_FEEDBACK, 1.0, a)
    _, zeta = ogd_step(st0, [[-3.0]], b)
    assert zeta == 0.0


def test_ogd_init_projects():
    st0 = ogd_init([[7.0]], STATE_FEEDBACK, 0.1, interval(0.0, 2.5))
    assert st0.theta[0, 0] == 2.5
    with pytest.raises(ValueError):
        ogd_init([[0.0]], STATE_FEEDBACK, 0.0, interval(0.0, 2.5))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_feasible_after_every_step_and_deterministic(seed):
    def run():
        r = np.random.default_rng(seed)
        S = SafeDecisionSet(Polytope([[1.0, 1.0], [-1.0, 0.5]], [1.0, 1.0]), (2,), 2.0, "euclidean")
        s = ogd_init(r.standard_normal(2), DIRECT, 0.3, S)
        out = []
        for _ in range(10):
            L = r.standard_normal((2, 2))
            S = SafeDecisionSet(Polytope(L, np.abs(r.standard_normal(2)) + 0.1), (2,), 2.0,
                                "euclidean")
            s, z = ogd_step(s, r.standard_normal(2), S)
            assert S.contains(s.theta, 1e-7) and z >= 0
            out.append((s.theta.copy(), z))
        return out

    a, b = run(), run()
    assert all(np.array_equal(x[0], y[0]) and x[1] == y[1] for x, y in zip(a, b))
