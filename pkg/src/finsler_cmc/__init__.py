"""Numerical Finsler geometry: metrics, navigation, hypersurfaces and theorem checks."""

from .calculus import DiffConfig, Jet
from .hypersurface import (Ellipsoid, FSphere, PerturbedSphere, QuadratureGrid, Sphere, domain_volume,
                           frame_at, shape_operator_at, surface_volume)
from .metric import Euclidean, RandersNorm, VolumeDensity
from .navigation import NavigatedMetric, WindField, homothety_dilation, solve_navigation
from .theorems import CheckReport

__all__ = [
    "CheckReport", "DiffConfig", "Ellipsoid", "Euclidean", "FSphere", "Jet", "NavigatedMetric",
    "PerturbedSphere", "QuadratureGrid", "RandersNorm", "Sphere", "VolumeDensity", "WindField",
    "domain_volume", "frame_at", "homothety_dilation", "shape_operator_at", "solve_navigation",
    "surface_volume",
]
