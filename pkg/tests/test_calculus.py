import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finsler_cmc import calculus as cc
from finsler_cmc.calculus import DiffConfig, Jet
from finsler_cmc.errors import ConfigError, DefinitenessError, DegenerateDirectionError

CENTRAL = DiffConfig(mode="central")


def randers_sq(b):
    b = np.asarray(b, float)
    return lambda x, y: (cc.sqrt(cc.dot(y, y)) + cc.dot(y, b)) ** 2


def test_quadratic_second_partial():
    f = lambda x, y: cc.dot(y, y)
    assert cc.partial_y(f, np.zeros(3), np.array([0.3, -1.0, 2.0]), (0, 0)) == pytest.approx(2.0, abs=1e-14)


def test_euclidean_square_hessian_is_twice_identity():
    f = lambda x, y: cc.dot(y, y)
    y = np.array([0.2, 0.7, -0.4])
    for i in range(3):
        for j in range(3):
            assert cc.partial_y(f, np.zeros(3), y, (i, j)) == pytest.approx(2.0 * (i == j), abs=1e-13)


def test_randers_second_partial_matches_central_difference():
    f = randers_sq([0.5, 0, 0])
    y = np.array([1.0, 0.0, 0.0])
    exact = cc.partial_y(f, np.zeros(3), y, (0, 0))
    fd = cc.partial_y(f, np.zeros(3), y, (0, 0), CENTRAL)
    assert exact == pytest.approx(fd, rel=1e-6)
    # (|y| + b.y)^2 along y1 is (1.5 y1)^2 for y1 > 0
    assert exact == pytest.approx(4.5, rel=1e-14)


def test_third_order_against_mpmath():
    b = np.array([0.3, -0.2, 0.1])
    f = randers_sq(b)
    y = np.array([0.4, 1.1, -0.7])
    got = cc.partial_y(f, np.zeros(3), y, (0, 1, 2))
    mpmath.mp.dps = 30

    def g(a, c, d):
        r = mpmath.sqrt(a * a + c * c + d * d)
        return (r + b[0] * a + b[1] * c + b[2] * d) ** 2

    want = mpmath.diff(g, (y[0], y[1], y[2]), (1, 1, 1))
    assert got == pytest.approx(float(want), rel=1e-12)


def test_partial_x_vanishes_for_minkowski_and_reads_position():
    f = randers_sq([0.2, 0.1, 0.0])
    assert cc.partial_x(f, np.ones(3), np.array([1.0, 2.0, 0.5]), 1) == 0.0
    g = lambda x, y: x[..., 0] * cc.dot(y, y)
    y = np.array([1.0, 2.0, 2.0])
    assert cc.partial_x(g, np.array([0.3, 0, 0]), y, 0) == pytest.approx(9.0, rel=1e-14)


def test_zero_direction_rejected():
    with pytest.raises(DegenerateDirectionError):
        cc.partial_y(randers_sq([0.1, 0, 0]), np.zeros(3), np.zeros(3), (0,))


def test_order_above_max_rejected():
    with pytest.raises(ConfigError):
        cc.partial_y(randers_sq([0.1, 0, 0]), np.zeros(3), np.ones(3), (0, 0, 0), DiffConfig(max_order=2))
    with pytest.raises(ConfigError):
        DiffConfig(max_order=4)


def test_fd_step_must_be_positive():
    with pytest.raises(ConfigError):
        DiffConfig(mode="central", fd_step=0.0)


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.integers(0, 2), st.integers(0, 2))
@settings(max_examples=40, deadline=None)
def test_mixed_partials_commute(yl, i, j):
    y = np.array(yl)
    if np.linalg.norm(y) < 1e-2:
        y = y + np.array([1.0, 0, 0])
    f = randers_sq([0.4, -0.1, 0.2])
    a = cc.partial_y(f, np.zeros(3), y, (i, j))
    b = cc.partial_y(f, np.zeros(3), y, (j, i))
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_derivatives_shapes_and_modes_agree():
    def func(z):
        return cc.stack([cc.sin(z[..., 0]) * z[..., 1] ** 2, cc.exp(z[..., 0] - z[..., 1])])

    z = np.array([[0.3, 0.5], [1.0, -0.2]])
    v, jac, hess = cc.derivatives(func, z, 2)
    assert v.shape == (2, 2) and jac.shape == (2, 2, 2) and hess.shape == (2, 2, 2, 2)
    _, jac_fd, hess_fd = cc.derivatives(func, z, 2, CENTRAL)
    np.testing.assert_allclose(jac, jac_fd, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(hess, hess_fd, rtol=1e-5, atol=1e-6)


def test_jet_arithmetic_is_exact_for_products():
    x = Jet.seed(np.array(2.0), [np.array(1.0), np.array(1.0)])
    y = x * x * x  # d2/dx2 x^3 = 6x
    assert y.data[3] == pytest.approx(12.0)
    assert (1.0 / x).data[1] == pytest.approx(-0.25)


def test_cross_product_orientation():
    t = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    np.testing.assert_allclose(cc.cross(t), [0, 0, 1.0])
    t2 = np.array([[0.0, 1.0]])
    v = np.array([1.0, 0.0])
    assert np.dot(v, cc.cross(t2)) == pytest.approx(np.linalg.det(np.stack([v, t2[0]])))
    rng = np.random.default_rng(3)
    t4 = rng.normal(size=(3, 4))
    v4 = rng.normal(size=4)
    assert np.dot(v4, cc.cross(t4)) == pytest.approx(np.linalg.det(np.vstack([v4, t4])))


def test_generalized_eigen_examples():
    k, _ = cc.sym_generalized_eigen(np.eye(3), np.eye(3))
    np.testing.assert_allclose(k, 1.0)
    k, _ = cc.sym_generalized_eigen(np.diag([1.0, 2.0]), np.diag([1.0, 4.0]))
    np.testing.assert_allclose(k, [0.5, 1.0])


def test_generalized_eigen_residual_random():
    rng = np.random.default_rng(11)
    for _ in range(20):
        B = rng.normal(size=(3, 3))
        B = B + B.T
        Q = rng.normal(size=(3, 3))
        G = Q @ Q.T + 0.5 * np.eye(3)
        k, V = cc.sym_generalized_eigen(B, G)
        assert np.all(np.diff(k) >= 0)
        res = np.abs(B @ V - G @ V * k).max()
        assert res <= 1e-10 * (np.abs(B).max() + np.abs(G).max())
        np.testing.assert_allclose(V.T @ G @ V, np.eye(3), atol=1e-10)


def test_generalized_eigen_needs_definite_metric():
    with pytest.raises(DefinitenessError):
        cc.sym_generalized_eigen(np.eye(2), np.diag([1.0, -1.0]))


def test_elementary_symmetric_and_means():
    k = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(cc.elementary_symmetric(k), [6.0, 11.0, 6.0])
    np.testing.assert_allclose(cc.normalized_mean_curvatures(k), [2.0, 11.0 / 3.0, 6.0])
