"""Closed hypersurfaces in R^n (n = 2, 3) and their Finsler extrinsic geometry.

Surfaces are star-shaped images of the round sphere in spherical chart
coordinates ``u`` (``u = (phi,)`` for curves, ``u = (theta, phi)`` for
surfaces).  Every embedding's ``point`` accepts jets, so tangents and
second derivatives come out exact.

Orientation: ``"outer"`` uses the conormal pointing away from the
enclosed domain, ``"inner"`` the opposite one.  With the outer normal the
unit sphere has principal curvatures ``-1``; with the inner normal ``+1``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import pi

import numpy as np

from . import calculus as cc
from .calculus import DEFAULT_CONFIG, Jet, is_jet, value
from .errors import (ChartDegeneracyError, ConfigError, DefinitenessError, InvalidNormError, NumericError,
                     OrientationError, UnsupportedError)
from .metric import chern_symbols, legendre_inv, metric_tensor

OUTER, INNER = "outer", "inner"
THREADS_ENV = "FINSLER_CMC_THREADS"
CHUNK = 1024


def orientation_sign(orientation):
    if orientation == OUTER:
        return 1.0
    if orientation == INNER:
        return -1.0
    raise ConfigError(f"orientation must be 'inner' or 'outer', got {orientation!r}", key="orientation")


def chart_direction(u):
    """Round-sphere point for chart coordinates ``u`` (jets allowed)."""
    m = value(u).shape[-1]
    if m == 1:
        phi = u[..., 0]
        return cc.stack([cc.cos(phi), cc.sin(phi)])
    if m == 2:
        th, phi = u[..., 0], u[..., 1]
        s = cc.sin(th)
        return cc.stack([s * cc.cos(phi), s * cc.sin(phi), cc.cos(th)])
    raise UnsupportedError("hypersurfaces are supported for n = 2 and n = 3 only")


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

class Embedding:
    """A closed hypersurface given by a chart map ``u -> point(u)``."""

    n: int
    center: np.ndarray | None = None  # star centre, when known

    def point(self, u):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


def _vec(v, n, key):
    if v is None:
        return np.zeros(n)
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"expected a vector of length {n}", key=key)
    return v


class Sphere(Embedding):
    """Euclidean round sphere."""

    def __init__(self, n, radius=1.0, center=None):
        if not radius > 0:
            raise ConfigError("radius must be positive", key="embedding.radius")
        self.n, self.radius = n, float(radius)
        self.center = _vec(center, n, "embedding.center")

    def point(self, u):
        return self.center + self.radius * chart_direction(u)

    def describe(self):
        return {"kind": "sphere", "radius": self.radius, "center": self.center.tolist()}


class FSphere(Embedding):
    """``{F(x - c) = r}``, or ``{F(c - x) = r}`` when ``reflected``.

    The reflected ball is the Wulff shape for the inner normal.
    """

    def __init__(self, metric, radius=1.0, center=None, reflected=False):
        if not metric.is_minkowski:
            raise UnsupportedError("F-spheres are defined for Minkowski metrics")
        if not radius > 0:
            raise ConfigError("radius must be positive", key="embedding.radius")
        self.metric, self.radius, self.reflected = metric, float(radius), bool(reflected)
        self.n = metric.n
        self.center = _vec(center, self.n, "embedding.center")

    def point(self, u):
        w = chart_direction(u)
        f = self.metric.F(self.center, -w if self.reflected else w)
        return self.center + self.radius * w / f[..., None]

    def describe(self):
        return {"kind": "f-sphere", "radius": self.radius, "reflected": self.reflected,
                "center": self.center.tolist(), "metric": self.metric.describe()}


class Ellipsoid(Embedding):
    def __init__(self, semi_axes, center=None):
        a = np.asarray(semi_axes, dtype=float)
        if a.ndim != 1 or a.size not in (2, 3) or np.any(a <= 0):
            raise ConfigError("semi_axes must be 2 or 3 positive numbers", key="embedding.semi_axes")
        self.axes, self.n = a, a.size
        self.center = _vec(center, self.n, "embedding.center")

    def point(self, u):
        return self.center + self.axes * chart_direction(u)

    def describe(self):
        return {"kind": "ellipsoid", "semi_axes": self.axes.tolist(), "center": self.center.tolist()}


class PerturbedSphere(Embedding):
    """Radial graph ``r(w) = radius (1 + amplitude p(w))`` over the sphere.

    ``p`` is a polynomial in the direction ``w``, given as a list of
    ``(coefficient, exponents)`` pairs.
    """

    def __init__(self, n, radius, amplitude, terms, center=None):
        self.n, self.radius, self.amplitude = n, float(radius), float(amplitude)
        self.terms = [(float(c), tuple(int(e) for e in ex)) for c, ex in terms]
        for _, ex in self.terms:
            if len(ex) != n or min(ex) < 0:
                raise ConfigError(f"exponents must be {n} non-negative integers", key="embedding.terms")
        self.center = _vec(center, n, "embedding.center")

    def radial(self, w):
        p = 0.0
        for c, ex in self.terms:
            mono = 1.0
            for i, e in enumerate(ex):
                if e:
                    mono = mono * cc.power(w[..., i], e) if e > 1 else mono * w[..., i]
            p = p + c * mono
        return self.radius * (1.0 + self.amplitude * p)

    def point(self, u):
        w = chart_direction(u)
        return self.center + self.radial(w)[..., None] * w

    def describe(self):
        return {"kind": "perturbed-sphere", "radius": self.radius, "amplitude": self.amplitude,
                "terms": [[c, list(e)] for c, e in self.terms], "center": self.center.tolist()}


class MappedSurface(Embedding):
    """Image of ``base`` under the affine map ``x -> M x + v``."""

    def __init__(self, base, M, v):
        self.base, self.M, self.v = base, np.asarray(M, float), np.asarray(v, float)
        self.n = base.n
        if base.center is not None:
            self.center = self.M @ base.center + self.v
        if np.linalg.det(self.M) <= 0:
            raise UnsupportedError("affine maps must preserve orientation")

    def point(self, u):
        return cc.matvec(self.M, self.base.point(u)) + self.v

    def describe(self):
        return {"kind": "mapped", "base": self.base.describe(), "M": self.M.tolist(), "v": self.v.tolist()}


class DeformedSurface(Embedding):
    """``phi_t(u) = base(u) + t X(u)`` for a velocity field ``X`` on the chart."""

    def __init__(self, base, velocity, t):
        self.base, self.velocity, self.t = base, velocity, float(t)
        self.n = base.n
        self.center = base.center

    def point(self, u):
        return self.base.point(u) + self.t * self.velocity(u)

    def describe(self):
        return {"kind": "deformed", "base": self.base.describe(), "t": self.t}


class ParallelSurface(Embedding):
    """``phi(u) + s xi(u)``: the surface pushed a distance ``s`` along its unit normal."""

    def __init__(self, base, metric, distance, orientation=OUTER):
        self.base, self.metric, self.distance = base, metric, float(distance)
        self.orientation = orientation
        self.n = base.n
        self.center = base.center

    def point(self, u):
        x, T = point_and_tangents(self.base, u)
        fr = _frame(self.metric, x, T, orientation_sign(self.orientation))
        return x + self.distance * fr["xi"]

    def describe(self):
        return {"kind": "parallel", "base": self.base.describe(), "distance": self.distance,
                "orientation": self.orientation}


# ---------------------------------------------------------------------------
# Velocity fields on the chart (for variations)
# ---------------------------------------------------------------------------

class NormalVelocity:
    """``X(u) = eta(w(u)) xi(u)`` where ``eta`` is a polynomial in the direction."""

    def __init__(self, emb, metric, orientation, terms, shift=0.0):
        self.emb, self.metric, self.orientation = emb, metric, orientation
        self.terms = terms
        self.shift = float(shift)

    def eta(self, u):
        w = chart_direction(u)
        p = -self.shift
        for c, ex in self.terms:
            mono = 1.0
            for i, e in enumerate(ex):
                for _ in range(e):
                    mono = mono * w[..., i]
            p = p + c * mono
        return p

    def __call__(self, u):
        x, T = point_and_tangents(self.emb, u)
        xi = _frame(self.metric, x, T, orientation_sign(self.orientation))["xi"]
        return self.eta(u)[..., None] * xi


class AmbientVelocity:
    """``X(u) = A phi(u) + b + coeff * xi(u)``; the last term allows mean-zero projection."""

    def __init__(self, emb, A, b, metric=None, orientation=OUTER, coeff=0.0):
        self.emb, self.A, self.b = emb, np.asarray(A, float), np.asarray(b, float)
        self.metric, self.orientation, self.coeff = metric, orientation, float(coeff)

    def __call__(self, u):
        x, T = point_and_tangents(self.emb, u)
        out = cc.matvec(self.A, x) + self.b
        if self.coeff:
            out = out + self.coeff * _frame(self.metric, x, T, orientation_sign(self.orientation))["xi"]
        return out


class TangentialVelocity:
    """``X(u) = sum_a c_a(w) d_a phi`` with polynomial coefficients."""

    def __init__(self, emb, coeffs):
        self.emb, self.coeffs = emb, coeffs

    def __call__(self, u):
        _, T = point_and_tangents(self.emb, u)
        w = chart_direction(u)
        out = 0.0
        for a, terms in enumerate(self.coeffs):
            p = 0.0
            for c, ex in terms:
                mono = 1.0
                for i, e in enumerate(ex):
                    for _ in range(e):
                        mono = mono * w[..., i]
                p = p + c * mono
            out = out + p[..., None] * T[..., a, :]
        return out


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

def point_and_tangents(emb, u):
    """``(phi(u), d phi(u))``; tangents have shape ``(..., n-1, n)``.

    Works for plain or jet ``u``; one extra infinitesimal unit carries the
    chart derivative.
    """
    m = value(u).shape[-1]
    K = cc.order_of(u)
    E = np.zeros((1 << (K + 1), m, m))
    E[1 << K] = np.eye(m)
    base = u.pad(K + 1) if is_jet(u) else Jet.constant(u, 1)
    P = emb.point(base[..., None, :] + Jet(E))
    T = P.coef(K)
    x = P.drop(K)[..., 0, :]
    if K == 0:
        return x.val, T.val
    return x, T


def _frame(metric, x, T, sign):
    N = cc.cross(T)
    area = cc.sqrt(cc.dot(N, N))
    nbar = sign * N / area[..., None]
    yhat = legendre_inv(metric, x, nbar)
    fstar = metric.F(x, yhat)
    return {"N": N, "area": area, "nbar": nbar, "fstar": fstar,
            "xi": yhat / fstar[..., None], "nu": nbar / fstar[..., None]}


def _threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer", key=THREADS_ENV) from None


def _chunked(fn, u):
    """Apply ``fn`` to node chunks and concatenate in node order."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1 or u.shape[0] <= CHUNK:
        return fn(u)
    parts = [u[i:i + CHUNK] for i in range(0, u.shape[0], CHUNK)]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outs = list(ex.map(fn, parts))
    else:
        outs = [fn(p) for p in parts]
    first = outs[0]
    if isinstance(first, dict):
        return {k: np.concatenate([o[k] for o in outs]) for k in first}
    return type(first)(**{k: np.concatenate([getattr(o, k) for o in outs]) for k in first.__dataclass_fields__})


@dataclass(frozen=True, eq=False)
class FrameData:
    u: np.ndarray
    x: np.ndarray
    tangents: np.ndarray
    nbar: np.ndarray  # Euclidean unit conormal on the chosen side
    area: np.ndarray  # Euclidean area density |N|
    fstar: np.ndarray  # F*(nbar)
    nu: np.ndarray
    xi: np.ndarray
    xi_minus: np.ndarray


def _check_rank(area, x):
    scale = np.maximum(1.0, np.max(np.abs(x)))
    if np.any(~(area > 1e-12 * scale)):
        raise ChartDegeneracyError("chart Jacobian is rank-deficient at a node")


def _check_orientation(emb, x, N):
    # outward means the chart normal points away from the star centre
    if emb.center is not None and np.any(np.sum((x - emb.center) * N, axis=-1) <= 0):
        raise OrientationError("chart orientation is reversed or the surface is not star-shaped about its centre")


def frame_at(emb, metric, u, orientation=OUTER):
    """Tangents, conormals and the Finsler unit normals at chart points ``u``."""
    sign = orientation_sign(orientation)

    def one(uu):
        x, T = point_and_tangents(emb, uu)
        N = cc.cross(T)
        area = np.sqrt(np.sum(N * N, axis=-1))
        _check_rank(area, x)
        _check_orientation(emb, x, N)
        fr = _frame(metric, x, T, sign)
        ym = legendre_inv(metric, x, -fr["nbar"])
        xm = ym / metric.F(x, ym)[..., None]
        return FrameData(uu, x, T, fr["nbar"], fr["area"], fr["fstar"], fr["nu"], fr["xi"], xm)

    return _chunked(one, u)


@dataclass(frozen=True, eq=False)
class CurvatureData:
    u: np.ndarray
    x: np.ndarray
    tangents: np.ndarray
    hessian: np.ndarray  # hessian[..., b, a, :] = d_b d_a phi
    nbar: np.ndarray
    area: np.ndarray
    fstar: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    dxi: np.ndarray  # dxi[..., b, :] = d_b xi
    B: np.ndarray
    ghat: np.ndarray
    principal: np.ndarray
    directions: np.ndarray  # chart-coordinate eigenvectors, columns
    H_hat: np.ndarray
    H_r: np.ndarray  # H_r[..., r-1], r = 1..n-1
    sigma_xi: np.ndarray
    asymmetry: np.ndarray

    @property
    def umbilicity(self):
        return np.max(np.abs(self.principal - self.H_hat[..., None]), axis=-1)


def shape_operator_at(emb, metric, u, which="plus", orientation=OUTER, density=None,
                      config=DEFAULT_CONFIG, sym_tol=1e-9):
    """Second fundamental form, principal and mean curvatures at chart points.

    ``which="minus"`` uses the opposite-side normal ``xi_-``.
    """
    sign = orientation_sign(orientation)
    if which == "minus":
        sign = -sign
    elif which != "plus":
        raise ConfigError("which must be 'plus' or 'minus'", key="which")

    def one(uu):
        m = uu.shape[-1]
        data = np.zeros((2,) + uu.shape[:-1] + (m, m))
        data[0] = uu[..., None, :]
        data[1] = np.eye(m)
        xj, Tj = point_and_tangents(emb, Jet(data))
        fr = _frame(metric, xj, Tj, sign)
        x = xj.val[..., 0, :]
        T = Tj.val[..., 0, :, :]
        hess = Tj.data[1]
        N = cc.cross(T)
        area = np.sqrt(np.sum(N * N, axis=-1))
        _check_rank(area, x)
        _check_orientation(emb, x, N)
        nu = fr["nu"].val[..., 0, :]
        xi = fr["xi"].val[..., 0, :]
        dxi = fr["xi"].data[1]
        gam = chern_symbols(metric, x, xi, config)
        B = (np.einsum("...i,...bai->...ab", nu, hess)
             + np.einsum("...i,...ijk,...aj,...bk->...ab", nu, gam, T, T))
        asym = np.max(np.abs(B - np.swapaxes(B, -1, -2)), axis=(-2, -1))
        bscale = np.max(np.abs(B), axis=(-2, -1))
        if np.any(asym > sym_tol * np.maximum(bscale, 1.0)):
            raise NumericError(f"second fundamental form is not symmetric (max defect {np.max(asym):.3e})")
        g = metric_tensor(metric, x, xi, config)
        ghat = np.einsum("...aj,...jk,...bk->...ab", T, g, T)
        try:
            k, vecs = cc.sym_generalized_eigen(B, ghat, sym_tol=np.inf)
        except DefinitenessError as exc:
            raise DefinitenessError(f"induced metric is not positive definite: {exc}") from None
        H_r = cc.normalized_mean_curvatures(k)
        sig = np.ones(x.shape[:-1]) if density is None else density.sigma(x)
        sigma_xi = sig * sign * np.sum(xi * N, axis=-1)
        return CurvatureData(uu, x, T, hess, fr["nbar"].val[..., 0, :], area, fr["fstar"].val[..., 0], nu, xi,
                             dxi, B, ghat, k, vecs, H_r[..., 0], H_r, sigma_xi, asym)

    return _chunked(one, u)


def induced_volume_density(emb, metric, density, u, orientation=OUTER):
    """``sigma_xi = sigma(x) det(xi, d_1 phi, ..., d_{n-1} phi)``."""
    fr = frame_at(emb, metric, u, orientation)
    sig = np.ones(fr.x.shape[:-1]) if density is None else density.sigma(fr.x)
    N = cc.cross(fr.tangents)
    out = sig * orientation_sign(orientation) * np.sum(fr.xi * N, axis=-1)
    if np.any(~(out > 0)):
        raise OrientationError("induced volume density is not positive; check the orientation")
    return out


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Product rule on the chart domain.

    n = 3: Gauss-Legendre in ``theta`` (never on a pole) times ``2 order``
    uniform points in ``phi``.  n = 2: ``order`` uniform points in ``phi``.
    """

    n: int
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, n, order):
        order = int(order)
        if order < 2:
            raise ConfigError("grid order must be at least 2", key="grid_order")
        if n == 2:
            phi = 2 * pi * (np.arange(order) + 0.5) / order
            return cls(2, order, phi[:, None], np.full(order, 2 * pi / order))
        if n == 3:
            t, wt = np.polynomial.legendre.leggauss(order)
            theta = 0.5 * pi * (t + 1)
            phi = 2 * pi * (np.arange(2 * order) + 0.5) / (2 * order)
            th, ph = np.meshgrid(theta, phi, indexing="ij")
            w = np.outer(0.5 * pi * wt, np.full(2 * order, pi / order))
            return cls(3, order, np.stack([th.ravel(), ph.ravel()], axis=-1), w.ravel())
        raise UnsupportedError("quadrature grids exist for n = 2 and n = 3 only")

    def refined(self):
        return QuadratureGrid.build(self.n, 2 * self.order)

    @property
    def domain_measure(self):
        return 2 * pi if self.n == 2 else 2 * pi * pi


def integrate(grid, values):
    """Quadrature sum in a fixed node order (numpy pairwise summation)."""
    values = np.ascontiguousarray(values, dtype=float)
    return float(np.sum(grid.weights * values))


def surface_volume(emb, metric, grid, orientation=OUTER, density=None):
    """``int dmu_xi``."""
    return integrate(grid, induced_volume_density(emb, metric, density, grid.nodes, orientation))


def domain_volume(emb, grid, metric=None, orientation=OUTER, form="determinant"):
    """Volume of the enclosed domain (with respect to ``dx``).

    ``form="determinant"``: ``(1/n) int det(phi - o, d phi)``.
    ``form="pairing"``: ``(1/n) int <phi - o, xi>_{g_xi} dmu_xi``, which needs
    a star centre ``o`` and a metric.
    """
    n = emb.n
    o = emb.center if emb.center is not None else np.zeros(n)
    if form == "determinant":
        x, T = point_and_tangents(emb, grid.nodes)
        return integrate(grid, np.sum((x - o) * cc.cross(T), axis=-1)) / n
    if form != "pairing":
        raise ConfigError(f"unknown volume form {form!r}", key="form")
    if emb.center is None or metric is None:
        raise UnsupportedError("the pairing form needs a star-shaped surface with known centre and a metric")
    fr = frame_at(emb, metric, grid.nodes, orientation)
    N = cc.cross(fr.tangents)
    if np.any(np.sum((fr.x - o) * N, axis=-1) <= 0):
        raise UnsupportedError("surface is not star-shaped about its centre")
    s = orientation_sign(orientation)
    dmu = s * np.sum(fr.xi * N, axis=-1)
    return integrate(grid, s * np.sum(fr.nu * (fr.x - o), axis=-1) * dmu) / n


# ---------------------------------------------------------------------------
# Mean curvature by other routes
# ---------------------------------------------------------------------------

def euclidean_anisotropic(metric, emb, u, orientation=OUTER, convexity_tol=1e-12):
    """Anisotropic normal, Weingarten matrix and ``H_F`` in the Euclidean picture.

    ``nu_F = F*(nbar) nbar + grad^S F*(nbar)``, ``S_F = -d nu_F`` written in the
    chart tangent basis, ``H_F = tr S_F``.
    """
    if not metric.is_minkowski:
        raise UnsupportedError("the Euclidean anisotropic formulation needs a Minkowski metric")
    cd = shape_operator_at(emb, metric, u, orientation=orientation)
    n = emb.n
    nbar, fstar, xi = cd.nbar, cd.fstar, cd.xi
    g = metric_tensor(metric, cd.x, xi)
    P = np.eye(n) - nbar[..., :, None] * nbar[..., None, :]
    # D^2 F* = (g(xi)^{-1} - xi xi^T) / F*, restricted to nbar^perp
    D2 = (np.linalg.inv(g) - xi[..., :, None] * xi[..., None, :]) / fstar[..., None, None]
    A = P @ D2 @ P + nbar[..., :, None] * nbar[..., None, :]
    if np.any(np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))[..., 0] <= convexity_tol):
        raise InvalidNormError("dual norm violates the convexity condition A_{F*} > 0")
    grad_s = xi - np.sum(xi * nbar, axis=-1)[..., None] * nbar  # DF*(nbar) = xi
    nu_F = fstar[..., None] * nbar + grad_s
    gbar = np.einsum("...an,...bn->...ab", cd.tangents, cd.tangents)
    M = np.einsum("...an,...bn->...ab", cd.tangents, cd.dxi)
    S = -np.linalg.solve(gbar, M)
    return nu_F, S, np.trace(S, axis1=-2, axis2=-1)


def sigma_mean_curvature(metric, density, emb, u, orientation=OUTER):
    """``H_xi`` from the first variation of ``int dmu_xi``.

    ``H = -[div_M(sigma xi) + F*(nbar) (grad sigma . nbar - sigma F_x(x, xi) . nbar)] / sigma``
    with ``div_M V = gbar^{ab} d_a V . d_b phi``.
    """
    cd = shape_operator_at(emb, metric, u, orientation=orientation, density=density)
    x, xi, T = cd.x, cd.xi, cd.tangents
    sig = density.sigma(x)
    gsig = sig[..., None] * density.grad_log(x)
    gbar_inv = np.linalg.inv(np.einsum("...an,...bn->...ab", T, T))
    div_xi = np.einsum("...ab,...an,...bn->...", gbar_inv, cd.dxi, T)
    dsig = np.einsum("...n,...an->...a", gsig, T)
    xiT = np.einsum("...n,...bn->...b", xi, T)
    div = sig * div_xi + np.einsum("...ab,...a,...b->...", gbar_inv, dsig, xiT)
    if metric.is_minkowski:
        Fx = np.zeros_like(x)
    else:
        _, d = cc.derivatives(lambda z: metric.F(z, xi[..., None, :])[..., None], x, 1)
        Fx = d[..., 0, :]
    corr = cd.fstar * (np.sum(gsig * cd.nbar, axis=-1) - sig * np.sum(Fx * cd.nbar, axis=-1))
    return -(div + corr) / sig
