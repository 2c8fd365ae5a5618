"""Light-limited phytoplankton in a periodically evolving water column.

Simulation of the nonlinear nonlocal model and computation of the basic
reproduction number ``R0`` of its linearization.
"""
from __future__ import annotations

from ._backend import BACKEND
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    ModelValidityError,
    NumericalError,
    PhytoColumnError,
    R0RangeError,
    ScalingError,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "ModelValidityError",
    "NumericalError",
    "PhytoColumnError",
    "R0RangeError",
    "ScalingError",
    "__version__",
]
