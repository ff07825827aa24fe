"""Numerical simulation and verification of the (n-1)-plurisubharmonic flow on flat tori."""

from .errors import (ConfigError, InvariantViolation, NonFinite, NotAMetricPower, PositivityLost,
                     PshflowError, SingularMetric, SingularTimeReached)
from .geometry import MetricField
from .grid import Grid, ScalarField

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Grid", "InvariantViolation", "MetricField", "NonFinite", "NotAMetricPower",
    "PositivityLost", "PshflowError", "ScalarField", "SingularMetric", "SingularTimeReached",
    "__version__",
]
