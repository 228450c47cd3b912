import numpy as np
import pytest

from fieldpipe import (RbfFdSettings, StencilSet, lamb_vector,
                       lighthill_scalar, lighthill_vector, time_derivative)
from fieldpipe.aeroacoustic import (TIME_DERIV_HALF_WIDTH, TIME_DERIV_WINDOW,
                                    AeroacousticError, check_uniform_dt)

SETTINGS = RbfFdSettings(epsilon_scaling=2.0)


def cloud(n=500, seed=11):
    return np.random.default_rng(seed).random((n, 3))


def targets(m=12, seed=12):
    return 0.25 + 0.5 * np.random.default_rng(seed).random((m, 3))


def test_lamb_cross_product_hand_value():
    # With user-supplied vorticity on coincident targets the Lamb vector is
    # a plain cross product: (0,0,2) x (1,0,0) = (0,2,0).
    src = cloud(100)
    s = StencilSet(src, src[:5], SETTINGS)
    u = np.tile([1.0, 0.0, 0.0], (len(src), 1))
    w = np.tile([0.0, 0.0, 2.0], (len(src), 1))
    L = lamb_vector(s, u, vorticity=w)
    np.testing.assert_allclose(L, np.tile([0.0, 2.0, 0.0], (5, 1)),
                               atol=1e-8)


def test_lamb_orthogonality():
    src = cloud()
    tgt = targets()
    s = StencilSet(src, tgt, SETTINGS)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((len(src), 3))
    w = rng.standard_normal((len(src), 3))
    L = lamb_vector(s, u, vorticity=w)
    u_t = s.evaluate(u)
    w_t = s.evaluate(w)
    dots = np.einsum("ij,ij->i", L, u_t)
    assert np.abs(dots).max() < 1e-12 * np.abs(L).max() * np.abs(u_t).max() \
        * len(src) or np.abs(dots).max() < 1e-10
    dots = np.einsum("ij,ij->i", L, w_t)
    assert np.abs(dots).max() < 1e-10


def test_lamb_rigid_rotation():
    # u = Omega x r with Omega = (0,0,1): vorticity = 2*Omega,
    # L = 2*Omega x u = -2*omega^2*(x, y, 0) pointing inward.
    src = cloud(800)
    tgt = targets()
    s = StencilSet(src, tgt, SETTINGS)
    u = np.stack([-src[:, 1], src[:, 0], np.zeros(len(src))], axis=1)
    L = lamb_vector(s, u)  # vorticity computed internally via curl
    expect = np.stack([-2.0 * tgt[:, 0], -2.0 * tgt[:, 1],
                       np.zeros(len(tgt))], axis=1)
    np.testing.assert_allclose(L, expect, atol=5e-4)


def test_lighthill_vector_composition():
    # With supplied vorticity: exactly gradient(u.u/2) + Lamb, bit for bit.
    src = cloud()
    tgt = targets()
    s = StencilSet(src, tgt, SETTINGS)
    rng = np.random.default_rng(5)
    u = rng.standard_normal((len(src), 3))
    w = rng.standard_normal((len(src), 3))
    got = lighthill_vector(s, u, vorticity=w)
    expect = s.gradient(0.5 * np.einsum("ij,ij->i", u, u)) \
        + lamb_vector(s, u, vorticity=w)
    np.testing.assert_array_equal(got, expect)


def test_lighthill_rigid_rotation_analytic():
    # For u = (-y, x, 0): u.u/2 = r^2/2, grad = (x, y, 0), and
    # L = -2(x, y, 0), so div(T) = -(x, y, 0).
    src = cloud(800)
    tgt = targets()
    s = StencilSet(src, tgt, SETTINGS)
    u = np.stack([-src[:, 1], src[:, 0], np.zeros(len(src))], axis=1)
    vec = lighthill_vector(s, u)
    expect = np.stack([-tgt[:, 0], -tgt[:, 1], np.zeros(len(tgt))], axis=1)
    # The kinetic-energy term is quadratic, so a random cloud only gives
    # stencil-order accuracy here.
    np.testing.assert_allclose(vec, expect, atol=0.1)


def test_lighthill_scalar_is_divergence_of_vector():
    src = cloud(600)
    tgt = targets()
    src_s = StencilSet(src, src, SETTINGS)
    chain = StencilSet(src, tgt, SETTINGS)
    rng = np.random.default_rng(6)
    u = rng.standard_normal((len(src), 3))
    got = lighthill_scalar(src_s, chain, u)
    expect = chain.divergence(lighthill_vector(src_s, u))
    np.testing.assert_array_equal(got, expect)
    assert got.shape == (len(tgt), 1)


# -- time derivative ---------------------------------------------------------


def test_time_derivative_formula():
    # Hand value: q = [0, 1, 2, 3, 4], dt = 1:
    # (2*(3-1) + (4-0)) / 8 = 1.
    q = np.arange(5.0).reshape(5, 1, 1)
    np.testing.assert_allclose(time_derivative(q, 1.0), 1.0)


def test_time_derivative_exact_on_quadratics():
    dt = 1e-5
    t = np.arange(-2, 3) * dt + 0.3
    for a, b, c in [(2.0, -3.0, 1.0), (0.0, 5.0, -2.0), (1e6, 0.1, 0.0)]:
        q = (a * t ** 2 + b * t + c).reshape(5, 1, 1)
        want = 2 * a * 0.3 + b
        assert time_derivative(q, dt)[0, 0] == pytest.approx(want, rel=1e-7)


def test_time_derivative_smooths_alternating_noise():
    # The +/- h alternating sequence has zero derivative under this stencil:
    # 2*(q1 - q-1) + (q2 - q-2) = 2*(-h - (-h)) + (h - h) = 0.
    h = 0.125
    q = np.array([h, -h, h, -h, h]).reshape(5, 1, 1)
    assert time_derivative(q, 1.0)[0, 0] == 0.0


def test_time_derivative_window_constants():
    assert TIME_DERIV_WINDOW == 5
    assert TIME_DERIV_HALF_WIDTH == 2


def test_time_derivative_bad_window():
    with pytest.raises(AeroacousticError, match="5"):
        time_derivative(np.zeros((4, 1, 1)), 1.0)
    with pytest.raises(AeroacousticError, match="step size"):
        time_derivative(np.zeros((5, 1, 1)), 0.0)


def test_check_uniform_dt():
    assert check_uniform_dt([0.0, 0.1, 0.2, 0.3]) == pytest.approx(0.1)
    with pytest.raises(AeroacousticError, match="non-uniform"):
        check_uniform_dt([0.0, 0.1, 0.25])
    with pytest.raises(AeroacousticError):
        check_uniform_dt([0.0])


def test_velocity_shape_checked():
    src = cloud(100)
    s = StencilSet(src, src[:3], SETTINGS)
    with pytest.raises(AeroacousticError, match="velocity"):
        lamb_vector(s, np.zeros((100, 2)))
