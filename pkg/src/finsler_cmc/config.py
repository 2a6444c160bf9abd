"""JSON run configuration: parsing, validation and object construction.

Every error is a :class:`ConfigError` naming the offending key and, when
it can be located, the line in the source file.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import hypersurface as hs
from .errors import ConfigError
from .metric import Euclidean, RandersNorm
from .navigation import WindField

SCHEMA = "finsler-cmc/1"
CHECK_NAMES = ("navigation_shift", "transformed_normal", "flowed_shift", "mean_relations",
               "heintze_karcher", "volume_variation")
OPTION_KEYS = {
    "flowed_shift": {"t_values"},
    "heintze_karcher": {"umbilic"},
    "volume_variation": {"count", "h", "cmc"},
}
TOP_KEYS = {"schema", "metric", "wind", "embedding", "orientation", "grid_order", "checks", "check_options",
            "tolerance_scale", "seed", "output", "description", "density"}
DENSITIES = ("constant-one", "busemann-hausdorff")


@dataclass
class RunConfig:
    raw: dict
    metric: object
    wind: WindField
    embedding: object
    orientation: str
    grid_order: int
    checks: list
    check_options: dict
    tolerance_scale: float
    seed: int
    output: dict = field(default_factory=dict)
    source: str = ""
    density: str = "constant-one"


def _line_of(text, key):
    if not text:
        return None
    leaf = key.split(".")[-1].split("[")[0]
    pat = re.compile(r'"' + re.escape(leaf) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return None


class _Ctx:
    def __init__(self, text):
        self.text = text

    def error(self, message, key):
        return ConfigError(message, key=key, line=_line_of(self.text, key))

    def get(self, obj, key, path, kind=None, default=...):
        if key not in obj:
            if default is ...:
                raise self.error(f"missing required key '{key}'", path)
            return default
        val = obj[key]
        if kind == "number":
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise self.error("expected a number", path)
            return float(val)
        if kind == "int":
            if isinstance(val, bool) or not isinstance(val, int):
                raise self.error("expected an integer", path)
            return val
        if kind == "vector":
            try:
                arr = np.asarray(val, dtype=float)
            except (TypeError, ValueError):
                raise self.error("expected a list of numbers", path) from None
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise self.error("expected a list of finite numbers", path)
            return arr
        if kind == "matrix":
            try:
                arr = np.asarray(val, dtype=float)
            except (TypeError, ValueError):
                raise self.error("expected a list of rows", path) from None
            if arr.ndim != 2 or not np.all(np.isfinite(arr)):
                raise self.error("expected a square matrix of finite numbers", path)
            return arr
        if kind == "str" and not isinstance(val, str):
            raise self.error("expected a string", path)
        if kind == "dict" and not isinstance(val, dict):
            raise self.error("expected an object", path)
        return val


def _wrap(ctx, path, fn):
    try:
        return fn()
    except ConfigError as exc:
        raise ctx.error(str(exc).split(" [key")[0], exc.key or path) from None


def build_metric(ctx, spec):
    kind = ctx.get(spec, "kind", "metric.kind", "str")
    if kind == "euclidean":
        n = ctx.get(spec, "dimension", "metric.dimension", "int")
        return _wrap(ctx, "metric.dimension", lambda: Euclidean(n))
    if kind == "randers":
        b = ctx.get(spec, "b", "metric.b", "vector")
        return _wrap(ctx, "metric.b", lambda: RandersNorm(b))
    raise ctx.error(f"unknown metric kind {kind!r} (expected 'euclidean' or 'randers')", "metric.kind")


def build_wind(ctx, spec, n):
    if spec is None:
        return WindField.zero(n)
    kind = ctx.get(spec, "kind", "wind.kind", "str")
    if kind == "none":
        return WindField.zero(n)
    if kind == "constant":
        b = ctx.get(spec, "b", "wind.b", "vector")
        if b.size != n:
            raise ctx.error(f"wind vector must have length {n}", "wind.b")
        return WindField.constant(b)
    if kind == "dilation":
        c = ctx.get(spec, "c", "wind.c", "number")
        center = ctx.get(spec, "center", "wind.center", "vector", None)
        if center is not None and center.size != n:
            raise ctx.error(f"wind centre must have length {n}", "wind.center")
        return WindField.dilation(c, n, center)
    if kind == "affine":
        A = ctx.get(spec, "A", "wind.A", "matrix")
        b = ctx.get(spec, "b", "wind.b", "vector")
        if A.shape != (n, n) or b.size != n:
            raise ctx.error(f"affine wind needs a {n}x{n} matrix and a length-{n} vector", "wind.A")
        return WindField(A, b)
    raise ctx.error(f"unknown wind kind {kind!r} (expected none, constant, dilation or affine)", "wind.kind")


def build_embedding(ctx, spec, metric):
    kind = ctx.get(spec, "kind", "embedding.kind", "str")
    n = metric.n
    center = ctx.get(spec, "center", "embedding.center", "vector", None)
    if kind == "sphere":
        r = ctx.get(spec, "radius", "embedding.radius", "number", 1.0)
        return _wrap(ctx, "embedding", lambda: hs.Sphere(n, r, center))
    if kind == "f-sphere":
        r = ctx.get(spec, "radius", "embedding.radius", "number", 1.0)
        refl = ctx.get(spec, "reflected", "embedding.reflected", None, False)
        return _wrap(ctx, "embedding", lambda: hs.FSphere(metric, r, center, bool(refl)))
    if kind == "ellipsoid":
        a = ctx.get(spec, "semi_axes", "embedding.semi_axes", "vector")
        if a.size != n:
            raise ctx.error(f"semi_axes must have length {n}", "embedding.semi_axes")
        return _wrap(ctx, "embedding", lambda: hs.Ellipsoid(a, center))
    if kind == "perturbed-sphere":
        r = ctx.get(spec, "radius", "embedding.radius", "number", 1.0)
        amp = ctx.get(spec, "amplitude", "embedding.amplitude", "number")
        terms = ctx.get(spec, "terms", "embedding.terms")
        if not isinstance(terms, list) or not all(isinstance(t, list) and len(t) == 2 for t in terms):
            raise ctx.error("terms must be a list of [coefficient, exponents] pairs", "embedding.terms")
        return _wrap(ctx, "embedding.terms", lambda: hs.PerturbedSphere(n, r, amp, terms, center))
    raise ctx.error(f"unknown embedding kind {kind!r}", "embedding.kind")


def _check_wind(ctx, metric, wind, emb):
    if wind.is_zero():
        return
    x, _ = hs.point_and_tangents(emb, hs.QuadratureGrid.build(emb.n, 8).nodes)
    fw = metric.F(x, -wind(x))
    if np.any(fw >= 1.0):
        raise ctx.error(f"wind too strong: navigation constraint F(x,-W(x)) < 1 violated "
                        f"(max F(x,-W) = {np.max(fw):.6g} on the surface)", "wind")


def parse(raw, text="", source=""):
    """Validate a decoded config object and build the run objects."""
    ctx = _Ctx(text)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", key="<root>", line=1)
    for key in raw:
        if key not in TOP_KEYS:
            raise ctx.error(f"unknown key '{key}'", key)
    schema = ctx.get(raw, "schema", "schema", "str")
    if schema != SCHEMA:
        raise ctx.error(f"unsupported schema {schema!r} (expected {SCHEMA!r})", "schema")
    metric = build_metric(ctx, ctx.get(raw, "metric", "metric", "dict"))
    wind = build_wind(ctx, ctx.get(raw, "wind", "wind", "dict", None), metric.n)
    emb = build_embedding(ctx, ctx.get(raw, "embedding", "embedding", "dict"), metric)
    if emb.n != metric.n:
        raise ctx.error("embedding dimension does not match the metric", "embedding")
    _check_wind(ctx, metric, wind, emb)
    orientation = ctx.get(raw, "orientation", "orientation", "str", hs.OUTER)
    if orientation not in (hs.INNER, hs.OUTER):
        raise ctx.error("orientation must be 'inner' or 'outer'", "orientation")
    order = ctx.get(raw, "grid_order", "grid_order", "int", 16)
    if order < 2:
        raise ctx.error("grid_order must be at least 2", "grid_order")
    checks = ctx.get(raw, "checks", "checks")
    if not isinstance(checks, list) or not checks:
        raise ctx.error("checks must be a non-empty list", "checks")
    for name in checks:
        if name not in CHECK_NAMES:
            raise ctx.error(f"unknown check {name!r}; known: {', '.join(CHECK_NAMES)}", "checks")
    options = ctx.get(raw, "check_options", "check_options", "dict", {})
    for name, opts in options.items():
        if name not in OPTION_KEYS:
            raise ctx.error(f"check {name!r} takes no options", f"check_options.{name}")
        if not isinstance(opts, dict):
            raise ctx.error("expected an object", f"check_options.{name}")
        for k in opts:
            if k not in OPTION_KEYS[name]:
                raise ctx.error(f"unknown option '{k}' for {name}", f"check_options.{name}.{k}")
    scale = ctx.get(raw, "tolerance_scale", "tolerance_scale", "number", 1.0)
    if not scale > 0:
        raise ctx.error("tolerance_scale must be positive", "tolerance_scale")
    seed = ctx.get(raw, "seed", "seed", "int", 0)
    output = ctx.get(raw, "output", "output", "dict", {})
    density = ctx.get(raw, "density", "density", "str", DENSITIES[0])
    if density not in DENSITIES:
        raise ctx.error(f"density must be one of {', '.join(DENSITIES)}", "density")
    return RunConfig(raw, metric, wind, emb, orientation, order, list(checks), copy.deepcopy(options),
                     scale, seed, output, source, density)


def bundled_example(name):
    """Path-like handle of a config shipped with the package, or None."""
    res = resources.files("finsler_cmc") / "examples" / Path(name).name
    return res if res.is_file() else None


def load(path):
    """Read, decode and validate a config file."""
    p = Path(path)
    if p.is_file():
        text = p.read_text()
    else:
        res = bundled_example(path)
        if res is None:
            raise ConfigError(f"config file not found: {path}", key="<file>")
        text = res.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", key="<json>", line=exc.lineno) from None
    return parse(raw, text, str(path))


def set_key(raw, dotted, val):
    """Copy of ``raw`` with the dotted key replaced by ``val``."""
    out = copy.deepcopy(raw)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        if not isinstance(node, dict):
            raise ConfigError(f"cannot descend into {p!r}", key=dotted)
        node = node.setdefault(p, {})
    node[parts[-1]] = val
    return out
