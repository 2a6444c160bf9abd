"""Finsler metrics and their derived objects.

A metric is any object exposing ``F(x, y)`` and ``F_grad(x, y)`` that
accept numpy arrays or :class:`~finsler_cmc.calculus.Jet` values with the
coordinate axis last.  Everything else (fundamental tensor, Legendre
transform, spray, Chern symbols, S-curvature, Busemann-Hausdorff density)
is derived generically from ``F`` by exact differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from . import calculus as cc
from .calculus import DEFAULT_CONFIG, Jet, value
from .errors import ConfigError, DegenerateDirectionError, NumericError


class MetricSpec:
    """Base class of all metrics; subclasses implement ``F_grad``."""

    n: int
    is_minkowski: bool = True

    def F(self, x, y):
        return self.F_grad(x, y)[0]

    def F_grad(self, x, y):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError

    def bh_density(self, x):
        return bh_density_quadrature(self, x)


class Euclidean(MetricSpec):
    def __init__(self, n):
        if n not in (2, 3, 4):
            raise ConfigError("dimension must be 2, 3 or 4", key="dimension")
        self.n = n

    def F_grad(self, x, y):
        f = cc.sqrt(cc.dot(y, y))
        return f, y / f[..., None]

    def describe(self):
        return {"kind": "euclidean", "dimension": self.n}

    def bh_density(self, x):
        return np.ones(np.shape(value(x))[:-1])


class RandersNorm(MetricSpec):
    """Minkowski Randers norm ``F(y) = |y| + <b, y>`` with ``|b| < 1``."""

    def __init__(self, b):
        b = np.asarray(b, dtype=float)
        if b.ndim != 1 or b.size not in (2, 3, 4):
            raise ConfigError("b must be a vector of length 2, 3 or 4", key="metric.b")
        if not np.linalg.norm(b) < 1.0:
            raise ConfigError(f"Randers drift must satisfy |b| < 1 (got {np.linalg.norm(b):.6g})", key="metric.b")
        self.b = b
        self.n = b.size

    def F_grad(self, x, y):
        r = cc.sqrt(cc.dot(y, y))
        return r + cc.dot(y, self.b), y / r[..., None] + self.b

    def describe(self):
        return {"kind": "randers", "b": self.b.tolist()}


def check_direction(y, what="y"):
    if np.any(np.all(value(y) == 0.0, axis=-1)):
        raise DegenerateDirectionError(f"{what} must be nonzero")


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------

def eval_F(metric, x, y):
    check_direction(y)
    return value(metric.F(np.asarray(x, float), np.asarray(y, float)))


def legendre(metric, x, y):
    """Legendre transform ``L(y) = F F_y`` (a covector)."""
    f, fy = metric.F_grad(x, y)
    return f[..., None] * fy


def _xy_func(metric, n, outputs):
    def func(z):
        x, y = z[..., :n], z[..., n:]
        f, fy = metric.F_grad(x, y)
        L = f[..., None] * fy
        parts = []
        if "F2" in outputs:
            parts.append(f * f)
        parts.extend(L[..., i] for i in range(n))
        return cc.stack(parts)
    return func


def metric_tensor(metric, x, y, config=DEFAULT_CONFIG):
    """``g_ij(x, y)`` as a plain array, shape ``(..., n, n)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = y.shape[-1]
    x, y = np.broadcast_arrays(x, y)
    z = np.concatenate([x, y], axis=-1)
    _, dL = cc.derivatives(_xy_func(metric, n, ()), z, 1, config, wrt=range(n, 2 * n))
    return 0.5 * (dL + np.swapaxes(dL, -1, -2))


@dataclass(frozen=True, eq=False)
class FundamentalTensor:
    g: np.ndarray
    x: np.ndarray
    y: np.ndarray


def fundamental_tensor(metric, x, y, config=DEFAULT_CONFIG):
    check_direction(y)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return FundamentalTensor(metric_tensor(metric, x, y, config), x, y)


def _legendre_inv_real(metric, x, tau, tol=1e-14, maxiter=80):
    """Minimise ``F(y)^2/2 - tau(y)``; its minimiser is ``L^{-1}(tau)``."""
    y = np.array(tau, dtype=float, copy=True)
    tau_norm = np.linalg.norm(tau, axis=-1)
    for _ in range(maxiter):
        f, fy = metric.F_grad(x, y)
        r = f[..., None] * fy - tau
        res = np.linalg.norm(r, axis=-1)
        if np.all(res <= tol * tau_norm):
            return y
        g = metric_tensor(metric, x, y)
        d = -np.linalg.solve(g, r[..., None])[..., 0]
        phi0 = 0.5 * f * f - np.sum(tau * y, axis=-1)
        slope = np.sum(r * d, axis=-1)
        alpha = np.ones_like(phi0)
        todo = np.ones(phi0.shape, dtype=bool)
        y_new = y.copy()
        for _ in range(40):
            trial = y + alpha[..., None] * d
            ft = value(metric.F(x, trial))
            phi = 0.5 * ft * ft - np.sum(tau * trial, axis=-1)
            ok = phi <= phi0 + 1e-4 * alpha * slope + 1e-15 * np.abs(phi0)
            take = todo & ok
            y_new[take] = trial[take]
            todo &= ~ok
            if not np.any(todo):
                break
            alpha = np.where(todo, 0.5 * alpha, alpha)
        if np.any(todo):
            # stagnation at round-off level
            y_new[todo] = (y + alpha[..., None] * d)[todo]
        y = y_new
    f, fy = metric.F_grad(x, y)
    res = np.linalg.norm(f[..., None] * fy - tau, axis=-1)
    if np.any(res > 1e-10 * tau_norm):
        raise NumericError(f"inverse Legendre transform did not converge (residual {np.max(res / tau_norm):.3e})")
    return y


def legendre_inv(metric, x, tau):
    """``L^{-1}(tau)``; jets in ``x`` or ``tau`` are propagated exactly."""
    K = cc.order_of(x, tau)
    x0, t0 = value(x), value(tau)
    check_direction(t0, "covector")
    x0, t0 = np.broadcast_arrays(x0, t0)
    y0 = _legendre_inv_real(metric, x0, t0)
    if K == 0:
        return y0
    ginv = np.linalg.inv(metric_tensor(metric, x0, y0))
    y = Jet.constant(y0, K)
    # chord iterations: each pass makes one more infinitesimal order exact
    for _ in range(K + 1):
        f, fy = metric.F_grad(x, y)
        y = y - cc.matvec(ginv, f[..., None] * fy - tau)
    return y


def dual_norm(metric, x, tau):
    """``F*(x, tau) = max{tau(y) : F(x, y) = 1}``."""
    y = legendre_inv(metric, x, tau)
    return metric.F(x, y)


# ---------------------------------------------------------------------------
# Spray, connection, S-curvature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SprayData:
    g: np.ndarray
    ginv: np.ndarray
    G: np.ndarray
    N: np.ndarray | None = None
    dgx: np.ndarray | None = None  # dgx[..., l, k, j] = d g_lk / d x^j
    dgy: np.ndarray | None = None  # dgy[..., l, k, m] = d g_lk / d y^m
    F2x: np.ndarray | None = None


def spray_data(metric, x, y, order=1, config=DEFAULT_CONFIG):
    """Spray coefficients (order 1) and, at order 2, N, dg/dx, dg/dy."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    x, y = np.broadcast_arrays(x, y)
    n = y.shape[-1]
    z = np.concatenate([x, y], axis=-1)
    d = cc.derivatives(_xy_func(metric, n, ("F2",)), z, order, config)
    dF2 = d[1][..., 0, :]
    dL = d[1][..., 1:, :]
    Lx, Ly = dL[..., :n], dL[..., n:]
    g = 0.5 * (Ly + np.swapaxes(Ly, -1, -2))
    ginv = np.linalg.inv(g)
    Q = 2.0 * np.einsum("...lk,...k->...l", Lx, y) - dF2[..., :n]
    G = 0.25 * np.einsum("...il,...l->...i", ginv, Q)
    if order < 2:
        return SprayData(g, ginv, G, F2x=dF2[..., :n])
    ddF2 = d[2][..., 0, :, :]
    ddL = d[2][..., 1:, :, :]
    dQ = (2.0 * np.einsum("...lkj,...k->...lj", ddL[..., :n, n:], y)
          + 2.0 * Lx - ddF2[..., :n, n:])
    dgy = ddL[..., n:, n:]
    dgx = ddL[..., n:, :n]
    N = np.einsum("...ip,...pj->...ij", ginv, 0.25 * dQ - np.einsum("...pqj,...q->...pj", dgy, G))
    return SprayData(g, ginv, G, N, dgx, dgy, dF2[..., :n])


def spray_coefficients(metric, x, y, config=DEFAULT_CONFIG):
    """Geodesic coefficients ``G^i``; geodesics solve ``x'' + 2 G(x, x') = 0``."""
    check_direction(y)
    return spray_data(metric, x, y, 1, config).G


def nonlinear_connection(metric, x, y, config=DEFAULT_CONFIG):
    check_direction(y)
    return spray_data(metric, x, y, 2, config).N


def _chern_from(sd):
    D = sd.dgx.transpose(*range(sd.dgx.ndim - 3), -1, -3, -2) - np.einsum("...mj,...lkm->...jlk", sd.N, sd.dgy)
    # D[..., j, l, k] = delta_j g_lk
    T = D + np.einsum("...kjl->...jlk", D) - np.einsum("...ljk->...jlk", D)
    # T[..., j, l, k] = delta_j g_lk + delta_k g_jl - delta_l g_jk
    return 0.5 * np.einsum("...il,...jlk->...ijk", sd.ginv, T)


def chern_symbols(metric, x, w, config=DEFAULT_CONFIG, shortcut=True):
    """Chern connection coefficients ``Gamma^i_jk(x, w)``, shape ``(..., n, n, n)``.

    With ``shortcut`` a position-independent metric returns zeros without
    differentiating.
    """
    check_direction(w, "reference vector")
    x = np.asarray(x, float)
    w = np.asarray(w, float)
    if shortcut and metric.is_minkowski:
        shape = np.broadcast_shapes(x.shape, w.shape)
        return np.zeros(shape + (shape[-1], shape[-1]))
    return _chern_from(spray_data(metric, x, w, 2, config))


def covariant_derivative(metric, X, v, x, w, config=DEFAULT_CONFIG):
    """``nabla^w_v X = v^j dX/dx^j + Gamma^i_jk(w) v^j X^k`` at ``x``.

    ``X`` is a callable vector field accepting arrays or jets.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    if config.mode == cc.EXACT:
        dX = X(Jet.seed(x, [v])).pad(1).data[1]
    else:
        h = config.fd_step or np.finfo(float).eps ** (1 / 3) * max(1.0, float(np.max(np.abs(x))))
        dX = (value(X(x + h * v)) - value(X(x - h * v))) / (2 * h)
    gam = chern_symbols(metric, x, w, config)
    return dX + np.einsum("...ijk,...j,...k->...i", gam, v, value(X(x)))


@dataclass(frozen=True, eq=False)
class VolumeDensity:
    """Volume form ``sigma(x) dx``: ``constant-one`` or ``busemann-hausdorff``."""

    kind: str
    metric: MetricSpec | None = None

    def __post_init__(self):
        if self.kind not in ("constant-one", "busemann-hausdorff"):
            raise ConfigError(f"unknown density kind {self.kind!r}", key="density")
        if self.kind == "busemann-hausdorff" and self.metric is None:
            raise ConfigError("busemann-hausdorff density needs a metric", key="density")

    def sigma(self, x):
        x = np.asarray(x, float)
        if self.kind == "constant-one":
            return np.ones(x.shape[:-1])
        sig = np.broadcast_to(self.metric.bh_density(x), x.shape[:-1])
        if np.any(~(sig > 0)):
            raise NumericError("volume density must be positive")
        return sig

    def grad_log(self, x):
        x = np.asarray(x, float)
        if self.kind == "constant-one" or self.metric.is_minkowski:
            return np.zeros(x.shape)
        _, grad = cc.derivatives(lambda z: self.metric.bh_density(z)[..., None], x, 1)
        return grad[..., 0, :] / self.sigma(x)[..., None]


def s_curvature(metric, density, x, y, config=DEFAULT_CONFIG):
    """``S = dG^i/dy^i - y^i d(ln sigma)/dx^i``."""
    check_direction(y)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if metric.is_minkowski:
        tr = np.zeros(np.broadcast_shapes(x.shape, y.shape)[:-1])
    else:
        tr = np.trace(spray_data(metric, x, y, 2, config).N, axis1=-2, axis2=-1)
    return tr - np.sum(y * density.grad_log(x), axis=-1)


# ---------------------------------------------------------------------------
# Busemann-Hausdorff density
# ---------------------------------------------------------------------------

def unit_ball_volume(n):
    return pi ** (n / 2) / gamma(n / 2 + 1)


def sphere_rule(n, order):
    """Nodes on S^{n-1} and weights of the round measure (n = 2, 3)."""
    if n == 2:
        phi = 2 * pi * (np.arange(order) + 0.5) / order
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.full(order, 2 * pi / order)
    if n == 3:
        t, wt = np.polynomial.legendre.leggauss(order)
        theta = 0.5 * pi * (t + 1)
        wt = 0.5 * pi * wt
        phi = 2 * pi * (np.arange(2 * order) + 0.5) / (2 * order)
        th, ph = np.meshgrid(theta, phi, indexing="ij")
        pts = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        w = (wt[:, None] * np.sin(theta)[:, None] * np.full(2 * order, pi / order)[None, :])
        return pts.reshape(-1, 3), w.reshape(-1)
    raise ConfigError("Busemann-Hausdorff quadrature supports n = 2, 3", key="dimension")


def _indicatrix_volume(metric, x, order):
    n = metric.n
    pts, w = sphere_rule(n, order)
    xx = x[..., None, :]
    f = metric.F(xx, pts)
    return (cc.power(f, -n) * w).sum(-1) / n


def bh_density_quadrature(metric, x, order=48):
    """``vol(B^n) / vol{y : F(x, y) <= 1}`` by spherical quadrature.

    Accepts jets in ``x``.  Raises NumericError when halving the order
    changes the value by more than 1e-9 relative.
    """
    vol = _indicatrix_volume(metric, x, order)
    coarse = value(_indicatrix_volume(metric, value(x), order // 2))
    if np.any(np.abs(value(vol) - coarse) > 1e-9 * np.abs(value(vol))):
        raise NumericError("Busemann-Hausdorff quadrature did not converge")
    return unit_ball_volume(metric.n) / vol


def bh_density(metric, x, method="auto"):
    """Busemann-Hausdorff density of ``metric`` at ``x``."""
    x = np.asarray(x, float)
    if method == "quadrature":
        return value(bh_density_quadrature(metric, x))
    return value(metric.bh_density(x))
