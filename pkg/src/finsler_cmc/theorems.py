"""Executable checks of the navigation, Heintze-Karcher and variation theorems.

Every check returns a :class:`CheckReport` holding named residuals with
their tolerances; the verdict is ``pass`` iff every residual is within
tolerance.  Reports are pure functions of their inputs.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import hypersurface as hs
from .errors import PreconditionError, UnsupportedError
from .hypersurface import INNER, OUTER, QuadratureGrid
from .metric import VolumeDensity, s_curvature
from .navigation import (NavigatedMetric, WindField, flow, homothety_dilation, reparam, transformed_normal)

PASS, FAIL, PRECONDITION = "pass", "fail", "precondition-failed"

TOLERANCES = {
    "shift": 1e-6,
    "normal": 1e-8,
    "alignment": 1e-4,
    "flowed": 1e-4,
    "flowed_killing": 1e-6,
    "mean": 1e-6,
    "s_curvature": 1e-4,
    "identity": 1e-9,
    "hk_equality": 1e-3,
    "hk_inequality": 1e-3,
    "hk_strict": 1.0,
    "variation_a": 1e-3,
    "variation_b": 1e-6,
    "variation_c": 1e-5,
}

EIGEN_GAP = 1e-6
CMC_TOL = 1e-8


@dataclass
class CheckReport:
    check: str
    config_digest: str
    residuals: list = field(default_factory=list)  # (name, value, tolerance)
    anchor: str = ""
    values: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    precondition_failed: bool = False

    def add(self, name, value, tol):
        self.residuals.append((name, float(value), float(tol)))

    @property
    def verdict(self):
        if self.precondition_failed:
            return PRECONDITION
        ok = all(v <= t for _, v, t in self.residuals)  # NaN compares false
        return PASS if ok else FAIL

    def to_dict(self):
        return {"check": self.check, "config_digest": self.config_digest, "verdict": self.verdict,
                "anchor": self.anchor,
                "residuals": [{"name": n, "value": v, "tolerance": t, "verdict": PASS if v <= t else FAIL}
                              for n, v, t in self.residuals],
                "values": {k: _plain(v) for k, v in sorted(self.values.items())}, "notes": list(self.notes)}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def digest(obj):
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _report(name, anchor, description):
    return CheckReport(name, digest({"check": name, **description}), anchor=anchor)


def certify(base, wind):
    cert = homothety_dilation(base, wind)
    if not cert.valid:
        raise PreconditionError(f"wind is not homothetic for this metric (residual {cert.residual:.3e})")
    return cert


def _tol(key, scale):
    return TOLERANCES[key] * scale


def _alignment(cd, cdt):
    """Largest angle between matched principal directions, skipping near-degenerate nodes."""
    if cd.principal.shape[-1] < 2:
        return 0.0, 0
    gaps = np.min(np.diff(cd.principal, axis=-1), axis=-1)
    keep = gaps >= EIGEN_GAP
    if not np.any(keep):
        return 0.0, int(keep.size)
    v = np.einsum("...an,...ak->...kn", cd.tangents[keep], cd.directions[keep])
    vt = np.einsum("...an,...ak->...kn", cdt.tangents[keep], cdt.directions[keep])
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    vt = vt / np.linalg.norm(vt, axis=-1, keepdims=True)
    vt = vt * np.sign(np.sum(v * vt, axis=-1))[..., None]
    # chord form keeps small angles accurate, unlike arccos near 1
    angle = 2.0 * np.arcsin(np.clip(0.5 * np.linalg.norm(v - vt, axis=-1), 0.0, 1.0))
    return float(np.max(angle)), int(np.sum(~keep))


# ---------------------------------------------------------------------------
# Navigation
# ---------------------------------------------------------------------------

def check_navigation_shift(base, wind, emb, grid, orientation=OUTER, tol_scale=1.0):
    """Principal curvatures under ``(F~, xi + W)`` equal those under ``(F, xi)`` plus ``c``."""
    rep = _report("navigation_shift", "principal curvature shift under homothetic navigation",
                  {"metric": base.describe(), "wind": wind.describe(), "embedding": emb.describe(),
                   "grid": grid.order, "orientation": orientation})
    cert = certify(base, wind)
    nav = NavigatedMetric(base, wind)
    u = grid.nodes
    cd = hs.shape_operator_at(emb, base, u, orientation=orientation)
    cdt = hs.shape_operator_at(emb, nav, u, orientation=orientation)
    xi_t = transformed_normal(base, wind, cd.x, cd.xi)
    shift = np.max(np.abs(cdt.principal - cd.principal - cert.c))
    rep.add("shift", shift, _tol("shift", tol_scale))
    rep.add("normal_match", np.max(np.abs(cdt.xi - xi_t)), _tol("normal", tol_scale))
    angle, skipped = _alignment(cd, cdt)
    rep.add("direction_angle", angle, _tol("alignment", tol_scale))
    rep.values.update({"c": cert.c, "nodes": int(u.shape[0]), "alignment_skipped_nodes": skipped,
                       "certificate_residual": cert.residual, "convention": cert.convention})
    _normal_residuals(rep, nav, cd, xi_t, tol_scale)
    return rep


def _normal_residuals(rep, nav, cd, xi_t, tol_scale):
    f, fy = nav.F_grad(cd.x, xi_t)
    L = f[..., None] * fy
    tang = np.max(np.abs(np.einsum("...n,...an->...a", L, cd.tangents))
                  / np.linalg.norm(cd.tangents, axis=-1))
    rep.add("unit_normal", np.max(np.abs(f - 1.0)), _tol("normal", tol_scale))
    rep.add("tangency", tang, _tol("normal", tol_scale))


def check_transformed_normal(base, wind, emb, grid, orientation=OUTER, tol_scale=1.0):
    """``F~(xi + W) = 1`` and ``L~(xi + W)`` annihilates the tangent space."""
    rep = _report("transformed_normal", "unit normal under navigation is xi + W",
                  {"metric": base.describe(), "wind": wind.describe(), "embedding": emb.describe(),
                   "grid": grid.order, "orientation": orientation})
    nav = NavigatedMetric(base, wind)
    fr = hs.frame_at(emb, base, grid.nodes, orientation)
    xi_t = transformed_normal(base, wind, fr.x, fr.xi)
    _normal_residuals(rep, nav, fr, xi_t, tol_scale)
    rep.values["nodes"] = int(grid.nodes.shape[0])
    return rep


def check_flowed_shift(base, wind, emb, grid, t_values=(0.1, 0.5), orientation=OUTER, tol_scale=1.0):
    """Curvatures of ``psi_t(M_a(t))`` under ``F~`` against those of the parallel surface ``M_a(t)``.

    ``stated_relation`` tests ``k~(t) = exp(2ct) (k(a(t)) + c)``;
    ``corrected_relation`` tests ``k~(t) = exp(2ct) k(a(t)) + c``, which is
    what the chain rule gives for a Minkowski base.
    """
    rep = _report("flowed_shift", "principal curvatures along the navigated parallel family",
                  {"metric": base.describe(), "wind": wind.describe(), "embedding": emb.describe(),
                   "grid": grid.order, "orientation": orientation, "t": [float(t) for t in t_values]})
    cert = certify(base, wind)
    c = cert.c
    nav = NavigatedMetric(base, wind)
    tol = _tol("flowed_killing" if c == 0.0 else "flowed", tol_scale)
    worst_stated = worst_fixed = 0.0
    for t in t_values:
        a = reparam(c, t)
        psi = flow(wind, t)
        m_a = emb if a == 0.0 else hs.ParallelSurface(emb, base, a, orientation)
        m_t = hs.MappedSurface(m_a, psi.M, psi.v)
        k = hs.shape_operator_at(m_a, base, grid.nodes, orientation=orientation).principal
        kt = hs.shape_operator_at(m_t, nav, grid.nodes, orientation=orientation).principal
        e = math.exp(2 * c * t)
        stated = float(np.max(np.abs(kt - e * (k + c))))
        fixed = float(np.max(np.abs(kt - (e * k + c))))
        rep.values[f"stated_residual_t={t:g}"] = stated
        rep.values[f"corrected_residual_t={t:g}"] = fixed
        rep.values[f"mean_k_t={t:g}"] = float(np.mean(k))
        rep.values[f"mean_k_tilde_t={t:g}"] = float(np.mean(kt))
        worst_stated, worst_fixed = max(worst_stated, stated), max(worst_fixed, fixed)
    rep.add("stated_relation", worst_stated, tol)
    rep.add("corrected_relation", worst_fixed, tol)
    rep.values["c"] = c
    if worst_stated > tol >= worst_fixed:
        rep.notes.append("the stated relation exp(2ct)(k + c) misses by c(exp(2ct) - 1); "
                         "exp(2ct) k + c holds")
    return rep


def check_mean_relations(base, wind, emb, grid, orientation=OUTER, tol_scale=1.0):
    """Mean-curvature and S-curvature identities under navigation, at ``t = 0``."""
    rep = _report("mean_relations", "mean and S-curvature relations under navigation",
                  {"metric": base.describe(), "wind": wind.describe(), "embedding": emb.describe(),
                   "grid": grid.order, "orientation": orientation})
    cert = certify(base, wind)
    c, n = cert.c, base.n
    nav = NavigatedMetric(base, wind)
    dens = VolumeDensity("busemann-hausdorff", base)
    dens_t = VolumeDensity("busemann-hausdorff", nav)
    u = grid.nodes
    cd = hs.shape_operator_at(emb, base, u, orientation=orientation)
    cdt = hs.shape_operator_at(emb, nav, u, orientation=orientation)
    H = hs.sigma_mean_curvature(base, dens, emb, u, orientation)
    Ht = hs.sigma_mean_curvature(nav, dens_t, emb, u, orientation)
    S = s_curvature(base, dens, cd.x, cd.xi)
    St = s_curvature(nav, dens_t, cdt.x, cdt.xi)
    tol = _tol("mean", tol_scale)
    rep.add("anisotropic_mean_shift", np.max(np.abs(cdt.H_hat - cd.H_hat - c)), tol)
    rep.add("mean_shift", np.max(np.abs(Ht - H - 2 * n * c)), tol)
    rep.add("mean_vs_anisotropic", np.max(np.abs((n - 1) * cd.H_hat - H + S)), tol)
    rep.add("mean_vs_anisotropic_navigated", np.max(np.abs((n - 1) * cdt.H_hat - Ht + St)), tol)
    rep.add("s_curvature_shift", np.max(np.abs(St - S - c * (n + 1))), _tol("s_curvature", tol_scale))
    rep.values.update({"c": c, "nodes": int(u.shape[0]), "max_abs_S": float(np.max(np.abs(S))),
                       "mean_S_tilde": float(np.mean(St))})
    return rep


# ---------------------------------------------------------------------------
# Heintze-Karcher
# ---------------------------------------------------------------------------

def constant_density(kind, metric, emb):
    """Value of the volume density, which must be constant on the surface.

    The integral checks are covariant under a constant factor in ``sigma``,
    so ``"constant-one"`` and the Busemann-Hausdorff constant of a
    Minkowski (or homothetically navigated) metric give the same residuals.
    """
    if kind == "constant-one":
        return 1.0
    x = hs.point_and_tangents(emb, QuadratureGrid.build(emb.n, 4).nodes)[0]
    sig = VolumeDensity(kind, metric).sigma(np.vstack([x, np.zeros((1, emb.n))]))
    if np.max(sig) - np.min(sig) > 1e-12 * np.max(sig):
        raise UnsupportedError("integral checks need a volume density that is constant in x")
    return float(sig[0])


def _hk_terms(base, wind, emb, grid, density="constant-one"):
    """LHS integral, ``nV`` and the minimum of the shifted mean curvature."""
    if wind is None or wind.is_zero():
        metric, c = base, 0.0
    else:
        c = certify(base, wind).c
        metric = NavigatedMetric(base, wind)
    sig = constant_density(density, metric, emb)
    cd = hs.shape_operator_at(emb, metric, grid.nodes, orientation=INNER)
    shifted = cd.H_hat - c
    rhs = sig * emb.n * hs.domain_volume(emb, grid)
    lhs = sig * hs.integrate(grid, cd.sigma_xi / shifted) if np.all(shifted > 0) else float("nan")
    return lhs, rhs, float(np.min(shifted)), cd, c, sig


def check_heintze_karcher(base, wind, emb, grid, umbilic=None, tol_scale=1.0, density="constant-one"):
    """``int 1/(H^ - c) dmu >= nV`` with the inner normal (``c = 0`` without wind).

    ``umbilic=None`` decides from the curvature data; umbilic surfaces get
    the equality residual, the others a strictness residual comparing the
    gap to ten times the change under grid refinement.
    """
    rep = _report("heintze_karcher", "Heintze-Karcher inequality for the inner normal",
                  {"metric": base.describe(), "wind": None if wind is None else wind.describe(),
                   "embedding": emb.describe(), "grid": grid.order, "density": density})
    lhs, rhs, hmin, cd, c, sig = _hk_terms(base, wind, emb, grid, density)
    rep.values.update({"lhs": lhs, "rhs": rhs, "min_shifted_mean_curvature": hmin, "c": c, "sigma": sig,
                       "principal_min": float(np.min(cd.principal)), "principal_max": float(np.max(cd.principal))})
    if not hmin > 0:
        rep.precondition_failed = True
        rep.notes.append("mean curvature positivity fails at some node")
        return rep
    gap = lhs - rhs
    rep.values["gap"] = gap
    rep.add("inequality", max(0.0, -gap) / rhs, _tol("hk_inequality", tol_scale))
    umb = float(np.max(cd.umbilicity) / np.max(np.abs(cd.principal)))
    rep.values["umbilicity"] = umb
    if umbilic is None:
        umbilic = umb <= CMC_TOL
    if umbilic:
        rep.add("equality", abs(gap) / rhs, _tol("hk_equality", tol_scale))
        if c:
            # the navigated measure exceeds dmu_xi by nbar(W) dA
            fr = hs.frame_at(emb, base, grid.nodes, INNER)
            extra = sig * hs.integrate(grid, np.sum(fr.nbar * wind(fr.x), axis=-1) * fr.area / (cd.H_hat - c))
            rep.values["wind_flux_term"] = extra
            rep.values["gap_without_wind_flux"] = gap - extra
            if abs(gap) / rhs > _tol("hk_equality", tol_scale) >= abs(gap - extra) / rhs:
                rep.notes.append("equality fails by exactly the wind flux int nbar(W) dA / (H^ - c); "
                                 "the navigated measure is not dmu_xi")
    else:
        lhs2, rhs2, _, _, _, _ = _hk_terms(base, wind, emb, grid.refined(), density)
        err = abs((lhs2 - rhs2) - gap)
        rep.values["refinement_error"] = err
        rep.add("strictness", 10 * err / gap if gap > 0 else float("inf"), _tol("hk_strict", tol_scale))
    rep.notes.append("rigidity is checked only in the constructive direction")
    return rep


# ---------------------------------------------------------------------------
# Variations
# ---------------------------------------------------------------------------

def _richardson(f, h):
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(2 * h) - f(-2 * h)) / (4 * h)
    return (4 * d1 - d2) / 3


def _pairing(emb, metric, grid, orientation, X):
    """``s int nu(X) dmu_xi`` and ``int |nu(X)| dmu_xi``."""
    fr = hs.frame_at(emb, metric, grid.nodes, orientation)
    s = hs.orientation_sign(orientation)
    dmu = s * np.sum(fr.xi * hs.cc.cross(fr.tangents), axis=-1)
    nx = np.sum(fr.nu * X(grid.nodes), axis=-1)
    return s * hs.integrate(grid, nx * dmu), hs.integrate(grid, np.abs(nx) * dmu), fr, dmu


def random_fields(emb, metric, grid, orientation, count, seed):
    """Random affine ambient fields and mean-zero normal fields."""
    rng = np.random.default_rng(seed)
    n = emb.n
    fields = []
    for _ in range(count):
        A = rng.normal(scale=0.5, size=(n, n))
        b = rng.normal(scale=0.5, size=n)
        fields.append(hs.AmbientVelocity(emb, A, b, metric, orientation))
    normals = []
    exps = [e for e in np.ndindex(*(3,) * n) if sum(e) <= 2]
    dmu = hs.induced_volume_density(emb, metric, None, grid.nodes, orientation)
    total = hs.integrate(grid, dmu)
    for _ in range(count):
        terms = [(float(rng.normal()), tuple(int(i) for i in e)) for e in exps]
        eta = hs.NormalVelocity(emb, metric, orientation, terms).eta(grid.nodes)
        shift = hs.integrate(grid, eta * dmu) / total
        normals.append(hs.NormalVelocity(emb, metric, orientation, terms, shift))
    return fields, normals


def fr_x(emb, u):
    return hs.point_and_tangents(emb, u)[0]


def check_volume_variation(emb, metric, grid, orientation=OUTER, count=5, seed=0, h=1e-3, cmc=None,
                           tol_scale=1.0, density="constant-one"):
    """First variation of the enclosed volume and, on CMC surfaces, of ``int dmu_xi``.

    (a) ``dV/dt = s int nu(X) dmu_xi`` for random affine fields;
    (b) ``dV/dt = 0`` after projecting ``X`` to mean-zero normal speed;
    (c) on CMC surfaces ``d/dt int dmu_xi = 0`` for mean-zero normal fields.
    Derivatives are Richardson-extrapolated central differences.
    """
    rep = _report("volume_variation", "first variation of volume and volume-preserving criticality",
                  {"metric": metric.describe(), "embedding": emb.describe(), "grid": grid.order,
                   "orientation": orientation, "count": count, "seed": seed, "h": h, "density": density})
    sig = constant_density(density, metric, emb)
    step = h * _scale(emb)
    fields, normals = random_fields(emb, metric, grid, orientation, count, seed)
    area = hs.surface_volume(emb, metric, grid, orientation)
    # sigma multiplies every volume below; relative residuals do not see it
    worst_a = worst_b = 0.0
    for X in fields:
        pred, mag, _, _ = _pairing(emb, metric, grid, orientation, X)
        fd = _richardson(lambda t: hs.domain_volume(hs.DeformedSurface(emb, X, t), grid), step)
        worst_a = max(worst_a, abs(fd - pred) / mag)
        Xp = hs.AmbientVelocity(emb, X.A, X.b, metric, orientation, coeff=-pred * hs.orientation_sign(orientation) / area)
        fd0 = _richardson(lambda t: hs.domain_volume(hs.DeformedSurface(emb, Xp, t), grid), step)
        worst_b = max(worst_b, abs(fd0) / mag)
    rep.add("volume_derivative", worst_a, _tol("variation_a", tol_scale))
    rep.add("volume_preserving", worst_b, _tol("variation_b", tol_scale))
    cd = hs.shape_operator_at(emb, metric, grid.nodes, orientation=orientation)
    spread = float(np.max(cd.H_hat) - np.min(cd.H_hat)) / max(float(np.max(np.abs(cd.H_hat))), 1e-300)
    rep.values.update({"surface_volume": sig * area, "sigma": sig, "mean_curvature_spread": spread, "step": step})
    if cmc is None:
        cmc = spread <= CMC_TOL
    if cmc:
        worst_c = 0.0
        for X in normals:
            d = _richardson(lambda t: hs.surface_volume(hs.DeformedSurface(emb, X, t), metric, grid, orientation),
                            step)
            worst_c = max(worst_c, abs(d) / area)
        rep.add("cmc_criticality", worst_c, _tol("variation_c", tol_scale))
    else:
        rep.notes.append("surface is not CMC; criticality residual skipped")
    return rep


def _scale(emb):
    g = QuadratureGrid.build(emb.n, 8)
    x = fr_x(emb, g.nodes)
    return float(np.max(np.linalg.norm(x - (emb.center if emb.center is not None else 0.0), axis=-1)))


REGISTRY = {
    "navigation_shift": check_navigation_shift,
    "transformed_normal": check_transformed_normal,
    "flowed_shift": check_flowed_shift,
    "mean_relations": check_mean_relations,
    "heintze_karcher": check_heintze_karcher,
    "volume_variation": check_volume_variation,
}
