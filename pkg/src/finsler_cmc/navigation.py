"""Zermelo navigation: the metric ``F~`` solving ``F(x, y - F~ W) = F~``.

Winds are affine, ``W(x) = A x + b``.  For a Minkowski base the flow of
``W`` is a homothety with dilation ``c`` when ``F(A y) . F_y`` is a
multiple of ``F``; the fitted ``c`` and its residual form a
:class:`HomothetyCertificate`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import calculus as cc
from .calculus import Jet, value
from .errors import ConfigError, NumericError, PreconditionError, UnsupportedError, WindTooStrongError
from .metric import MetricSpec, check_direction, spray_coefficients

#: dilation sign convention, fixed against psi_t^* F = exp(-2ct) F, psi_t = exp(tA)
CONVENTION = "A = -2c I for a pure dilation (psi_t = exp(tA), psi_t^* F = exp(-2ct) F)"


@dataclass(frozen=True, eq=False)
class WindField:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2 or A.shape != (b.size, b.size):
            raise ConfigError("wind matrix A must be n x n with n = len(b)", key="wind.A")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return self.b.size

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, n)), np.zeros(n))

    @classmethod
    def constant(cls, b):
        b = np.asarray(b, dtype=float)
        return cls(np.zeros((b.size, b.size)), b)

    @classmethod
    def dilation(cls, c, n, center=None):
        """Homothetic wind with dilation ``c`` about ``center``."""
        center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        A = -2.0 * c * np.eye(n)
        return cls(A, -A @ center)

    def __call__(self, x):
        return cc.matvec(self.A, x) + self.b

    def is_zero(self):
        return not (np.any(self.A) or np.any(self.b))

    def describe(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


def _check_constraint(base, x, W):
    with np.errstate(invalid="ignore", divide="ignore"):  # W may vanish at a point
        fw = value(base.F(x, -W))
    bad = fw >= 1.0
    if np.any(bad):
        raise WindTooStrongError(
            f"navigation constraint F(x,-W(x)) < 1 violated (max F(x,-W) = {np.max(fw):.6g})")
    return fw


def _root_real(base, x, y, W):
    """Positive root of ``s -> F(x, y - s W) - s`` by Newton from ``s = 0``.

    The map is convex and strictly decreasing, so Newton iterates increase
    monotonically towards the root and never leave the bracket
    ``[0, F(y) / (1 - F(-W))]``.
    """
    fw = _check_constraint(base, x, W)
    fy = value(base.F(x, y))
    s_hi = fy / (1.0 - fw)
    s = np.zeros_like(fy)
    for _ in range(100):
        z = y - s[..., None] * W
        fz, gz = base.F_grad(x, z)
        dphi = -np.sum(gz * W, axis=-1) - 1.0
        s_new = np.minimum(s - (fz - s) / dphi, s_hi)
        done = np.all(np.abs(s_new - s) <= 4 * np.finfo(float).eps * s_new)
        s = s_new
        if done:
            return s, dphi
    z = y - s[..., None] * W
    fz, gz = base.F_grad(x, z)
    if np.any(np.abs(fz - s) > 1e-12 * s):
        raise NumericError("navigation root did not converge")
    return s, -np.sum(gz * W, axis=-1) - 1.0


class NavigatedMetric(MetricSpec):
    """The metric obtained from ``base`` by navigating in the wind ``W``."""

    def __init__(self, base, wind):
        if wind.n != base.n:
            raise ConfigError("wind dimension does not match the metric", key="wind")
        self.base = base
        self.wind = wind
        self.n = base.n
        self.is_minkowski = base.is_minkowski and not np.any(wind.A)

    def F(self, x, y):
        W = self.wind(x)
        x0, y0, W0 = value(x), value(y), value(W)
        x0, y0, W0 = np.broadcast_arrays(x0, y0, W0)
        s0, dphi = _root_real(self.base, x0, y0, W0)
        K = cc.order_of(x, y)
        if K == 0:
            return s0
        s = Jet.constant(s0, K)
        for _ in range(K + 1):
            s = s - (self.base.F(x, y - s[..., None] * W) - s) / dphi
        return s

    def F_grad(self, x, y):
        s = self.F(x, y)
        W = self.wind(x)
        _, gz = self.base.F_grad(x, y - s[..., None] * W)
        return s, gz / (1.0 + cc.dot(gz, W))[..., None]

    def bh_density(self, x):
        # translation of the indicatrix by W preserves its volume
        return self.base.bh_density(x)

    def describe(self):
        return {"kind": "navigation", "base": self.base.describe(), "wind": self.wind.describe()}


def solve_navigation(base, wind, x, y):
    """``F~(x, y)`` for the navigation datum ``(base, wind)``."""
    check_direction(y)
    return value(NavigatedMetric(base, wind).F(np.asarray(x, float), np.asarray(y, float)))


# ---------------------------------------------------------------------------
# Homothety
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomothetyCertificate:
    c: float
    residual: float
    flow_residual: float
    convention: str = CONVENTION

    @property
    def valid(self):
        return self.residual <= 1e-8

    @property
    def killing(self):
        return abs(self.c) <= max(self.residual, 1e-14)


def sample_directions(n, count=64, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(count, n))
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def homothety_dilation(base, wind, samples=None):
    """Fit ``c`` in ``F_y(y) . (A y) = -2 c F(y)`` and certify it.

    The flow residual is the pullback check
    ``max |F(exp(tA) y) exp(2ct) - F(y)| / F(y)`` over ``t = +-0.1, +-0.5``.
    """
    if not isinstance(wind, WindField):
        raise UnsupportedError("only affine winds W(x) = A x + b are supported")
    if not base.is_minkowski:
        raise UnsupportedError("homothety certificates need a Minkowski base metric")
    y = sample_directions(base.n) if samples is None else np.asarray(samples, float)
    x = np.zeros_like(y)
    f, fy = base.F_grad(x, y)
    q = np.sum(fy * (y @ wind.A.T), axis=-1)
    c = float(-np.sum(q * f) / (2.0 * np.sum(f * f)))
    residual = float(np.max(np.abs(q + 2.0 * c * f) / f))
    flow = 0.0
    for t in (-0.5, -0.1, 0.1, 0.5):
        yt = y @ expm(t * wind.A).T
        flow = max(flow, float(np.max(np.abs(value(base.F(x, yt)) * np.exp(2 * c * t) - f) / f)))
    if abs(c) < 1e-15:
        c = 0.0
    return HomothetyCertificate(c, residual, flow)


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Affine map ``x -> M x + v`` (the time-t flow of an affine wind)."""

    M: np.ndarray
    v: np.ndarray

    def __call__(self, x):
        return cc.matvec(self.M, x) + self.v

    def compose(self, other):
        return FlowMap(self.M @ other.M, self.M @ other.v + self.v)


def flow(wind, t):
    n = wind.n
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = wind.A
    aug[:n, n] = wind.b
    E = expm(t * aug)
    return FlowMap(E[:n, :n], E[:n, n])


def reparam(c, t):
    """``a(t) = (exp(2ct) - 1) / (2c)``, and ``t`` when ``c = 0``."""
    if c == 0.0:
        return float(t)
    return float(np.expm1(2.0 * c * t) / (2.0 * c))


def flow_and_reparam(wind, t, c=None):
    """``(psi_t, d psi_t, a(t))``; ``a`` is None when ``c`` is not given."""
    psi = flow(wind, t)
    return psi, psi.M, (None if c is None else reparam(c, t))


def transformed_normal(base, wind, x, xi, tol=1e-8):
    """``xi~ = xi + W(x)``, the unit normal of the same surface under ``F~``."""
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    f = value(base.F(x, xi))
    if np.any(np.abs(f - 1.0) > tol):
        raise PreconditionError(f"normal is not F-unit (max |F(xi) - 1| = {np.max(np.abs(f - 1.0)):.3e})")
    return xi + wind(x)


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------

def integrate_geodesic(metric, x0, v0, t_eval, rtol=1e-11, atol=1e-12):
    """Solve ``x'' + 2 G(x, x') = 0``; returns positions at ``t_eval``."""
    n = metric.n

    def rhs(_, state):
        x, v = state[:n], state[n:]
        return np.concatenate([v, -2.0 * spray_coefficients(metric, x, v)])

    t_eval = np.asarray(t_eval, float)
    sol = solve_ivp(rhs, (0.0, float(t_eval[-1])), np.concatenate([x0, v0]), method="DOP853",
                    t_eval=t_eval, rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericError(f"geodesic integration failed: {sol.message}")
    return sol.y[:n].T


def predicted_geodesic(wind, c, x0, u, t_eval):
    """``psi_t(x0 + a(t) u)``: the navigated geodesic through ``x0`` with
    initial velocity ``u + W(x0)`` over a Minkowski base.

    Only the unit-speed geodesic has this form, so ``u`` must be F-unit;
    the caller is responsible for that normalisation.
    """
    return np.array([flow(wind, t)(x0 + reparam(c, t) * np.asarray(u)) for t in t_eval])
