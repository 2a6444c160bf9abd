import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finsler_cmc import calculus as cc
from finsler_cmc import metric as fm
from finsler_cmc.errors import ConfigError, DegenerateDirectionError
from finsler_cmc.metric import Euclidean, MetricSpec, RandersNorm, VolumeDensity


class Conformal(MetricSpec):
    """Riemannian ``exp(u(x)) |y|``; Christoffel symbols are known in closed form."""

    is_minkowski = False

    def __init__(self, n=3):
        self.n = n
        self.a = np.array([0.3, -0.2, 0.1, 0.05][:n])

    def u(self, x):
        return cc.dot(x, self.a) + 0.2 * x[..., 0] * x[..., 0]

    def grad_u(self, x):
        g = np.broadcast_to(self.a, x.shape).copy()
        g[..., 0] += 0.4 * x[..., 0]
        return g

    def F_grad(self, x, y):
        r = cc.sqrt(cc.dot(y, y))
        e = cc.exp(self.u(x))
        return e * r, (e / r)[..., None] * y

    def describe(self):
        return {"kind": "conformal"}


def randers_dual(b, tau):
    """Closed-form dual of ``|y| + <b, y>``."""
    bb = 1.0 - b @ b
    bt = tau @ b
    return (np.sqrt(bb * (tau @ tau) + bt * bt) - bt) / bb


def fd_hessian_half_F2(metric, y, h=1e-4):
    n = y.size
    f2 = lambda v: metric.F(np.zeros(n), v) ** 2
    H = np.zeros((n, n))
    E = np.eye(n) * h
    for i in range(n):
        for j in range(n):
            H[i, j] = (f2(y + E[i] + E[j]) - f2(y + E[i] - E[j]) - f2(y - E[i] + E[j]) + f2(y - E[i] - E[j])) / (4 * h * h)
    return 0.5 * H


def test_worked_examples():
    x = np.zeros(2)
    assert fm.eval_F(Euclidean(2), x, np.array([3.0, 4.0])) == pytest.approx(5.0, abs=1e-14)
    R = RandersNorm([0.5, 0.0])
    assert fm.eval_F(R, x, np.array([1.0, 0.0])) == pytest.approx(1.5, abs=1e-14)
    assert fm.eval_F(R, x, np.array([-1.0, 0.0])) == pytest.approx(0.5, abs=1e-14)


def test_euclidean_tensor_is_identity_and_legendre_is_identity():
    E = Euclidean(3)
    y = np.array([0.3, -2.0, 1.1])
    np.testing.assert_allclose(fm.metric_tensor(E, np.zeros(3), y), np.eye(3), atol=1e-14)
    np.testing.assert_allclose(fm.legendre(E, np.zeros(3), y), y, atol=1e-14)


def test_randers_tensor_matches_finite_difference_hessian():
    R = RandersNorm([0.3, -0.4, 0.2])
    rng = np.random.default_rng(1)
    for y in rng.normal(size=(10, 3)):
        g = fm.fundamental_tensor(R, np.zeros(3), y).g
        np.testing.assert_allclose(g, fd_hessian_half_F2(R, y), rtol=2e-6, atol=2e-6)
        assert np.all(np.linalg.eigvalsh(g) > 0)


def test_fundamental_tensor_rejects_zero():
    with pytest.raises(DegenerateDirectionError):
        fm.fundamental_tensor(RandersNorm([0.1, 0.0]), np.zeros(2), np.zeros(2))


def test_randers_drift_bound_enforced():
    with pytest.raises(ConfigError, match="metric.b"):
        RandersNorm([0.6, 0.8])


def test_legendre_round_trip_randers():
    rng = np.random.default_rng(7)
    R = RandersNorm([0.5, 0.2, -0.3])
    y = rng.normal(size=(100, 3))
    x = np.zeros_like(y)
    back = fm.legendre_inv(R, x, fm.legendre(R, x, y))
    err = np.linalg.norm(back - y, axis=-1) / np.linalg.norm(y, axis=-1)
    assert err.max() <= 1e-10


def test_dual_norm_matches_closed_form_and_indicatrix_sampling():
    b = np.array([0.4, 0.1, -0.2])
    R = RandersNorm(b)
    rng = np.random.default_rng(5)
    dirs = rng.normal(size=(400000, 3))
    ind = dirs / fm.eval_F(R, np.zeros(3), dirs)[:, None]
    for tau in rng.normal(size=(5, 3)):
        got = float(fm.dual_norm(R, np.zeros(3), tau))
        assert got == pytest.approx(randers_dual(b, tau), rel=1e-12)
        sampled = (ind @ tau).max()
        assert sampled <= got * (1 + 1e-12)
        assert sampled == pytest.approx(got, rel=1e-3)


def test_dual_norm_euclidean():
    tau = np.array([1.0, -2.0, 2.0])
    assert float(fm.dual_norm(Euclidean(3), np.zeros(3), tau)) == pytest.approx(3.0, rel=1e-14)


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0.01, 50.0))
@settings(max_examples=50, deadline=None)
def test_homogeneity_of_F_g_and_legendre(yl, lam):
    y = np.array(yl)
    if np.linalg.norm(y) < 1e-3:
        y = y + 1.0
    R = RandersNorm([0.2, 0.5, -0.3])
    x = np.zeros(3)
    assert fm.eval_F(R, x, lam * y) == pytest.approx(lam * fm.eval_F(R, x, y), rel=1e-12)
    np.testing.assert_allclose(fm.metric_tensor(R, x, lam * y), fm.metric_tensor(R, x, y), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(fm.legendre(R, x, lam * y), lam * fm.legendre(R, x, y), rtol=1e-11, atol=1e-12)
    # Euler: g(y, y) = F^2
    g = fm.metric_tensor(R, x, y)
    assert y @ g @ y == pytest.approx(fm.eval_F(R, x, y) ** 2, rel=1e-11)


def test_busemann_hausdorff_closed_form_and_monte_carlo():
    b = np.array([0.3, 0.4, 0.0])
    R = RandersNorm(b)
    closed = (1 - b @ b) ** 2
    assert float(fm.bh_density(R, np.zeros(3), "quadrature")) == pytest.approx(closed, rel=1e-10)
    rng = np.random.default_rng(2024)
    hi = 1.0 / (1.0 - np.linalg.norm(b))
    pts = rng.uniform(-hi, hi, size=(1_000_000, 3))
    frac = np.mean(fm.eval_F(R, np.zeros(3), pts) <= 1.0)
    mc = fm.unit_ball_volume(3) / (frac * (2 * hi) ** 3)
    assert mc == pytest.approx(closed, rel=1e-2)


def test_busemann_hausdorff_euclidean_is_one():
    assert float(fm.bh_density(Euclidean(3), np.zeros(3), "quadrature")) == pytest.approx(1.0, rel=1e-12)
    assert float(fm.bh_density(Euclidean(2), np.zeros(2), "quadrature")) == pytest.approx(1.0, rel=1e-12)


def test_busemann_hausdorff_conformal_density_and_log_gradient():
    C = Conformal()
    x = np.array([0.2, -0.5, 0.3])
    assert float(fm.bh_density(C, x)) == pytest.approx(float(np.exp(3 * C.u(x))), rel=1e-10)
    dens = VolumeDensity("busemann-hausdorff", C)
    np.testing.assert_allclose(dens.grad_log(x), 3 * C.grad_u(x), rtol=1e-9)


def test_chern_symbols_vanish_for_minkowski():
    R = RandersNorm([0.3, 0.1, 0.2])
    y = np.array([0.5, 1.0, -0.2])
    assert np.all(fm.chern_symbols(R, np.ones(3), y) == 0.0)
    full = fm.chern_symbols(R, np.ones(3), y, shortcut=False)
    assert np.abs(full).max() <= 1e-12


def test_chern_symbols_of_conformal_metric_are_christoffel():
    C = Conformal()
    x = np.array([0.4, 0.1, -0.3])
    y = np.array([1.0, 0.5, 0.2])
    du = C.grad_u(x)
    d = np.eye(3)
    want = (np.einsum("ij,k->ijk", d, du) + np.einsum("ik,j->ijk", d, du) - np.einsum("jk,i->ijk", d, du))
    np.testing.assert_allclose(fm.chern_symbols(C, x, y), want, atol=1e-12)
    assert np.abs(fm.chern_symbols(C, x, y)).max() > 0.1


def test_geodesic_coefficients_of_conformal_metric():
    C = Conformal()
    x = np.array([0.4, 0.1, -0.3])
    y = np.array([1.0, 0.5, 0.2])
    du = C.grad_u(x)
    # 2 G^i = Gamma^i_jk y^j y^k
    want = 0.5 * (2 * y * (du @ y) - du * (y @ y))
    np.testing.assert_allclose(fm.spray_coefficients(C, x, y), want, atol=1e-12)


def test_covariant_derivative_exact_and_central_agree():
    C = Conformal()
    x = np.array([0.1, 0.2, 0.3])
    X = lambda p: cc.stack([p[..., 1] * p[..., 2], cc.sin(p[..., 0]), p[..., 0] * p[..., 0]])
    v = np.array([0.3, -1.0, 0.5])
    w = np.array([1.0, 1.0, 0.0])
    a = fm.covariant_derivative(C, X, v, x, w)
    b = fm.covariant_derivative(C, X, v, x, w, cc.DiffConfig(mode="central"))
    np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-8)


def test_s_curvature_zero_for_minkowski_and_riemannian():
    R = RandersNorm([0.3, 0.1, 0.2])
    rng = np.random.default_rng(0)
    y = rng.normal(size=(20, 3))
    x = rng.normal(size=(20, 3))
    assert np.abs(fm.s_curvature(R, VolumeDensity("constant-one"), x, y)).max() <= 1e-10
    C = Conformal()
    s = fm.s_curvature(C, VolumeDensity("busemann-hausdorff", C), 0.3 * x, y)
    assert np.abs(s).max() <= 1e-8


def test_s_curvature_conformal_with_flat_density():
    # with sigma = 1, S = y.d(ln sigma_BH)/dx = 3 du.y
    C = Conformal()
    x = np.array([0.1, 0.0, 0.2])
    y = np.array([0.3, 0.7, -1.0])
    s = fm.s_curvature(C, VolumeDensity("constant-one"), x, y)
    assert float(s) == pytest.approx(3 * C.grad_u(x) @ y, rel=1e-9)


def test_volume_density_validation():
    with pytest.raises(ConfigError):
        VolumeDensity("holmes-thompson")
    with pytest.raises(ConfigError):
        VolumeDensity("busemann-hausdorff")
