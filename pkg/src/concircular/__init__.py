"""Geodesic circles, concircular vector fields and conformal changes of Finsler metrics.

Everything is computed from truncated Taylor jets of F^2 at a tangent point,
so spray coefficients, connections and curvature come out exact up to
rounding rather than from finite differences.
"""

from .errors import (ConditioningError, ConfigError, ConvexityError, DomainError, InsufficientSamples,
                     IntegrationError, JetOrderError)
from .metric import (ConformalScale, Euclidean, MetricSpec, MinkowskiNorm, Randers, Riemannian,
                     TangentPoint, metric_from_dict, sample_points)

__version__ = "0.1.0"

__all__ = [
    "ConditioningError", "ConfigError", "ConvexityError", "DomainError", "InsufficientSamples",
    "IntegrationError", "JetOrderError", "ConformalScale", "Euclidean", "MetricSpec", "MinkowskiNorm",
    "Randers", "Riemannian", "TangentPoint", "metric_from_dict", "sample_points",
]
