"""Differentiation engine and small dense linear algebra.

Exact derivatives are obtained by propagating hyper-dual numbers
(:class:`Jet`): a value carries ``2**K`` components, one per subset of
``K`` nilpotent units ``e_0 .. e_{K-1}`` with ``e_i**2 = 0``.  Seeding
the units along coordinate directions and reading the ``e_0 e_1 ... ``
component yields mixed partial derivatives of order ``K`` without
truncation error.  Every component is a numpy array, so whole batches of
points (and of seed directions) are propagated in one pass.

A central-difference mode is kept as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement, permutations
from math import comb, factorial

import numpy as np

from .errors import ConfigError, DefinitenessError, DegenerateDirectionError, PreconditionError

EXACT = "exact"
CENTRAL = "central"


@dataclass(frozen=True)
class DiffConfig:
    """How derivatives are taken.

    mode is ``"exact"`` (hyper-dual propagation) or ``"central"``
    (nested central differences).  ``fd_step`` of ``None`` selects
    ``eps**(1/(2+order)) * scale`` per nesting level.
    """

    mode: str = EXACT
    fd_step: float | None = None
    max_order: int = 3

    def __post_init__(self):
        if self.mode not in (EXACT, CENTRAL):
            raise ConfigError(f"unknown differentiation mode {self.mode!r}", key="mode")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ConfigError("fd_step must be positive", key="fd_step")
        if not 0 <= self.max_order <= 3:
            raise ConfigError("max_order must lie in 0..3", key="max_order")


DEFAULT_CONFIG = DiffConfig()


@lru_cache(maxsize=None)
def _mul_table(K):
    rows = []
    for m in range(1 << K):
        s = m
        while True:
            rows.append((m, s, m ^ s))
            if s == 0:
                break
            s = (s - 1) & m
    rows.sort()
    ms = np.array([r[0] for r in rows])
    src = np.array([r[1] for r in rows])
    dst = np.array([r[2] for r in rows])
    starts = np.flatnonzero(np.r_[True, ms[1:] != ms[:-1]])
    return src, dst, starts


@lru_cache(maxsize=None)
def _unit_split(K, unit):
    """Indices of components with / without ``unit`` (both monotone)."""
    with_u = [m for m in range(1 << K) if (m >> unit) & 1]
    without_u = [m for m in range(1 << K) if not (m >> unit) & 1]
    return np.array(with_u), np.array(without_u)


class Jet:
    """Hyper-dual number with array-valued components.

    ``data`` has shape ``(2**K, *shape)``; ``data[mask]`` is the
    coefficient of the product of units whose bits are set in ``mask``.
    """

    __slots__ = ("data",)
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, data):
        data = np.asarray(data, dtype=float)
        k = data.shape[0].bit_length() - 1
        if data.shape[0] != 1 << k:
            raise ValueError("leading axis of a Jet must have length 2**K")
        self.data = data

    # -- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, K):
        value = np.asarray(value, dtype=float)
        data = np.zeros((1 << K,) + value.shape)
        data[0] = value
        return cls(data)

    @classmethod
    def seed(cls, value, directions):
        """Value plus ``directions[i] * e_i`` for each unit ``i``."""
        value = np.asarray(value, dtype=float)
        K = len(directions)
        data = np.zeros((1 << K,) + value.shape)
        data[0] = value
        for i, d in enumerate(directions):
            data[1 << i] = d
        return cls(data)

    # -- structure ----------------------------------------------------
    @property
    def K(self):
        return self.data.shape[0].bit_length() - 1

    @property
    def shape(self):
        return self.data.shape[1:]

    @property
    def ndim(self):
        return self.data.ndim - 1

    @property
    def val(self):
        return self.data[0]

    def part(self, mask):
        return self.data[mask]

    def pad(self, K):
        """Same number viewed with ``K`` units (new units have zero weight)."""
        if K == self.K:
            return self
        if K < self.K:
            raise ValueError("cannot drop units by padding")
        data = np.zeros((1 << K,) + self.shape)
        data[: self.data.shape[0]] = self.data
        return Jet(data)

    def coef(self, unit):
        """Coefficient of ``e_unit``, as a jet in the remaining units."""
        with_u, _ = _unit_split(self.K, unit)
        return Jet(self.data[with_u])

    def drop(self, unit):
        """Part free of ``e_unit``, as a jet in the remaining units."""
        _, without_u = _unit_split(self.K, unit)
        return Jet(self.data[without_u])

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.data[(slice(None),) + key])

    def sum(self, axis=None):
        if axis is None:
            return Jet(self.data.reshape(self.data.shape[0], -1).sum(axis=1))
        return Jet(self.data.sum(axis=axis + 1 if axis >= 0 else axis))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.data.reshape((self.data.shape[0],) + tuple(shape)))

    def __repr__(self):
        return f"Jet(K={self.K}, shape={self.shape})"

    # -- arithmetic ---------------------------------------------------
    def _aligned(self, ndim):
        extra = ndim - self.ndim
        if extra <= 0:
            return self.data
        return self.data.reshape((self.data.shape[0],) + (1,) * extra + self.shape)

    def _pair(self, other):
        K = max(self.K, other.K)
        a, b = self.pad(K), other.pad(K)
        nd = max(a.ndim, b.ndim)
        return a._aligned(nd), b._aligned(nd)

    def __neg__(self):
        return Jet(-self.data)

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._pair(other)
            return Jet(a + b)
        other = np.asarray(other, dtype=float)
        a = self._aligned(other.ndim)
        out = np.array(np.broadcast_to(a, (a.shape[0],) + np.broadcast_shapes(a.shape[1:], other.shape)))
        out[0] += other
        return Jet(out)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._pair(other)
            src, dst, starts = _mul_table(self.K if self.K >= other.K else other.K)
            return Jet(np.add.reduceat(a[src] * b[dst], starts, axis=0))
        other = np.asarray(other, dtype=float)
        return Jet(self._aligned(other.ndim) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        other = np.asarray(other, dtype=float)
        return Jet(self._aligned(other.ndim) / other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if p == 2:
            return self * self
        if p == 1:
            return self
        return power(self, p)


def is_jet(x):
    return isinstance(x, Jet)


def value(x):
    """Real part of a jet, or the argument itself."""
    return x.val if isinstance(x, Jet) else np.asarray(x, dtype=float)


def order_of(*xs):
    return max((x.K for x in xs if isinstance(x, Jet)), default=0)


def _taylor(x, coeffs):
    """``sum_k coeffs[k] * (x - x0)**k`` for a jet ``x``."""
    K = x.K
    delta_data = x.data.copy()
    delta_data[0] = 0.0
    delta = Jet(delta_data)
    out = np.zeros_like(x.data)
    out[0] = coeffs[0]
    term = delta
    for k in range(1, K + 1):
        out += coeffs[k] * term.data
        if k < K:
            term = term * delta
    return Jet(out)


def power(x, p):
    if not isinstance(x, Jet):
        return np.asarray(x, dtype=float) ** p
    x0 = x.val
    coeffs = []
    c = 1.0
    for k in range(x.K + 1):
        coeffs.append(c * x0 ** (p - k))
        c *= (p - k) / (k + 1)
    return _taylor(x, coeffs)


def reciprocal(x):
    if not isinstance(x, Jet):
        return 1.0 / np.asarray(x, dtype=float)
    x0 = x.val
    return _taylor(x, [(-1.0) ** k / x0 ** (k + 1) for k in range(x.K + 1)])


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    return power(x, 0.5)


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.val)
    return _taylor(x, [e / factorial(k) for k in range(x.K + 1)])


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    x0 = x.val
    coeffs = [np.log(x0)] + [(-1.0) ** (k + 1) / (k * x0**k) for k in range(1, x.K + 1)]
    return _taylor(x, coeffs)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.val), np.cos(x.val)
    cycle = [s, c, -s, -c]
    return _taylor(x, [cycle[k % 4] / factorial(k) for k in range(x.K + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.val), np.cos(x.val)
    cycle = [c, -s, -c, s]
    return _taylor(x, [cycle[k % 4] / factorial(k) for k in range(x.K + 1)])


def dot(a, b):
    return (a * b).sum(-1)


def matvec(m, v):
    """``m @ v`` over trailing axes; either argument may be a jet."""
    if isinstance(v, Jet):
        return (v[..., None, :] * m).sum(-1)
    return (m * np.asarray(v)[..., None, :]).sum(-1)


def stack(items, axis=-1):
    """np.stack for a mix of jets and arrays."""
    K = order_of(*items)
    if K == 0 and not any(isinstance(i, Jet) for i in items):
        return np.stack([np.asarray(i, dtype=float) for i in items], axis=axis)
    jets = [i.pad(K) if isinstance(i, Jet) else Jet.constant(i, K) for i in items]
    shape = np.broadcast_shapes(*(j.shape for j in jets))
    datas = [np.broadcast_to(j._aligned(len(shape)), (1 << K,) + shape) for j in jets]
    return Jet(np.stack(datas, axis=axis + 1 if axis >= 0 else axis))


def cross(t):
    """Generalised cross product of ``n-1`` vectors ``t[..., a, :]`` in R^n.

    The result ``N`` satisfies ``det(v, t_1, ..., t_{n-1}) = v . N``.
    """
    n = t.shape[-1]
    if n == 2:
        return stack([t[..., 0, 1], -t[..., 0, 0]])
    if n == 3:
        a, b = t[..., 0, :], t[..., 1, :]
        return stack([
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ])
    if n == 4:
        comps = []
        for i in range(4):
            rows = [r for r in range(4) if r != i]
            sub = [[t[..., a, r] for a in range(3)] for r in rows]
            det = (sub[0][0] * (sub[1][1] * sub[2][2] - sub[1][2] * sub[2][1])
                   - sub[0][1] * (sub[1][0] * sub[2][2] - sub[1][2] * sub[2][0])
                   + sub[0][2] * (sub[1][0] * sub[2][1] - sub[1][1] * sub[2][0]))
            comps.append(det if i % 2 == 0 else -det)
        return stack(comps)
    raise ValueError(f"dimension {n} not supported")


# ---------------------------------------------------------------------------
# Derivative tensors
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _combo_plan(w, k):
    """Seed layout and read-out plan for all derivatives up to order k in w variables."""
    combos = list(combinations_with_replacement(range(w), k))
    seeds = np.zeros((k, len(combos), w))
    for ci, combo in enumerate(combos):
        for i, var in enumerate(combo):
            seeds[i, ci, var] = 1.0
    plan = {r: {} for r in range(1, k + 1)}
    for ci, combo in enumerate(combos):
        for mask in range(1, 1 << k):
            bits = [i for i in range(k) if (mask >> i) & 1]
            idx = tuple(sorted(combo[i] for i in bits))
            plan[len(bits)].setdefault(idx, (mask, ci))
    return seeds, plan


def _as_jet_output(out, K, batch_shape):
    if isinstance(out, Jet):
        return out.pad(K)
    return Jet.constant(np.broadcast_to(out, batch_shape + np.shape(out)[len(batch_shape):]), K)


def derivatives(func, z, order, config=DEFAULT_CONFIG, wrt=None):
    """All partial derivatives of ``func`` up to ``order``.

    ``func`` maps ``(..., m)`` to ``(..., p)``.  Returns a list whose
    entry ``r`` has shape ``(..., p) + (w,)*r`` where ``w`` is the number
    of differentiated variables (``wrt``, default all ``m``).
    """
    z = np.asarray(z, dtype=float)
    m = z.shape[-1]
    wrt = list(range(m)) if wrt is None else list(wrt)
    if order > config.max_order:
        raise ConfigError(f"derivative order {order} exceeds max_order {config.max_order}", key="max_order")
    if config.mode == CENTRAL:
        return _central_derivatives(func, z, order, config, wrt)
    batch = z.shape[:-1]
    if order == 0:
        return [value(func(z))]
    w = len(wrt)
    seeds, plan = _combo_plan(w, order)
    n_combo = seeds.shape[1]
    data = np.zeros((1 << order,) + batch + (n_combo, m))
    data[0] = z[..., None, :]
    for i in range(order):
        data[1 << i][..., wrt] = seeds[i]
    out = _as_jet_output(func(Jet(data)), order, batch + (n_combo,))
    p_shape = out.shape[len(batch) + 1:]
    result = [np.take(out.data[0], 0, axis=len(batch))]
    for r in range(1, order + 1):
        tensor = np.zeros(batch + p_shape + (w,) * r)
        for idx, (mask, ci) in plan[r].items():
            block = np.take(out.data[mask], ci, axis=len(batch))
            for perm in set(permutations(idx)):
                tensor[(Ellipsis,) + perm] = block
        result.append(tensor)
    return result


def _central_derivatives(func, z, order, config, wrt):
    scale = max(1.0, float(np.max(np.abs(z))) if z.size else 1.0)
    eps = np.finfo(float).eps

    def step(level):
        if config.fd_step is not None:
            return config.fd_step
        return eps ** (1.0 / (2 + level)) * scale

    def base(zz):
        return value(func(zz))

    def d_once(f, level):
        h = step(level)

        def g(zz):
            cols = []
            for j in wrt:
                e = np.zeros(zz.shape[-1])
                e[j] = h
                cols.append((f(zz + e) - f(zz - e)) / (2 * h))
            return np.stack(cols, axis=-1)

        return g

    result = [base(z)]
    f = base
    for r in range(1, order + 1):
        f = d_once(f, order)
        result.append(f(z))
    return result


def _check_direction(y):
    y = value(y)
    if np.any(np.all(y == 0.0, axis=-1)):
        raise DegenerateDirectionError("tangent argument y must be nonzero")


def partial_y(f, x, y, multi_index, config=DEFAULT_CONFIG):
    """Mixed partial of the scalar field ``f(x, y)`` in the ``y`` variables."""
    _check_direction(y)
    multi_index = tuple(multi_index)
    if len(multi_index) > config.max_order:
        raise ConfigError(f"order {len(multi_index)} exceeds max_order {config.max_order}", key="max_order")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    if config.mode == CENTRAL:
        return _central_partial(lambda yy: value(f(x, yy)), y, multi_index, config)
    if not multi_index:
        return value(f(x, y))
    dirs = [np.eye(n)[i] * np.ones_like(y) for i in multi_index]
    out = f(x, Jet.seed(y, dirs))
    if not isinstance(out, Jet):
        return np.zeros(np.shape(out))
    return out.pad(len(multi_index)).data[(1 << len(multi_index)) - 1]


def partial_x(f, x, y, index, config=DEFAULT_CONFIG):
    """First partial of the scalar field ``f(x, y)`` in ``x^index``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    if config.mode == CENTRAL:
        return _central_partial(lambda xx: value(f(xx, y)), x, (index,), config)
    out = f(Jet.seed(x, [np.eye(n)[index] * np.ones_like(x)]), y)
    if not isinstance(out, Jet):
        return np.zeros(np.shape(out))
    return out.data[1]


def _central_partial(g, z, multi_index, config):
    if not multi_index:
        return g(z)
    scale = max(1.0, float(np.max(np.abs(z))))
    h = config.fd_step or np.finfo(float).eps ** (1.0 / (2 + len(multi_index))) * scale
    i = multi_index[0]
    e = np.zeros(z.shape[-1])
    e[i] = h
    rest = multi_index[1:]
    return (_central_partial(g, z + e, rest, config) - _central_partial(g, z - e, rest, config)) / (2 * h)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def sym_generalized_eigen(B, G, sym_tol=1e-8):
    """Solve ``B v = lam G v`` for symmetric ``B`` and positive definite ``G``.

    Works on stacks of matrices.  Eigenvalues are ascending and the
    eigenvectors (columns) are G-orthonormal.
    """
    B = np.asarray(B, dtype=float)
    G = np.asarray(G, dtype=float)
    scale = np.max(np.abs(B), axis=(-2, -1), keepdims=True) + np.max(np.abs(G), axis=(-2, -1), keepdims=True)
    asym = np.max(np.abs(B - np.swapaxes(B, -1, -2)), axis=(-2, -1), keepdims=True)
    if np.any(asym > sym_tol * scale):
        raise PreconditionError(f"B is not symmetric (max asymmetry {float(np.max(asym)):.3e})")
    Bs = 0.5 * (B + np.swapaxes(B, -1, -2))
    Gs = 0.5 * (G + np.swapaxes(G, -1, -2))
    try:
        L = np.linalg.cholesky(Gs)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError("G is not positive definite") from exc
    Linv = np.linalg.inv(L)
    C = Linv @ Bs @ np.swapaxes(Linv, -1, -2)
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    lam, V = np.linalg.eigh(C)
    return lam, np.swapaxes(Linv, -1, -2) @ V


def elementary_symmetric(k):
    """Elementary symmetric polynomials rho_1..rho_m of ``k[..., :m]``."""
    k = np.asarray(k, dtype=float)
    m = k.shape[-1]
    e = [np.ones(k.shape[:-1])] + [np.zeros(k.shape[:-1]) for _ in range(m)]
    for j in range(m):
        for r in range(j + 1, 0, -1):
            e[r] = e[r] + k[..., j] * e[r - 1]
    return np.stack(e[1:], axis=-1)


def normalized_mean_curvatures(k):
    """``rho_r / C(m, r)`` for r = 1..m."""
    rho = elementary_symmetric(k)
    m = rho.shape[-1]
    return rho / np.array([comb(m, r) for r in range(1, m + 1)], dtype=float)
