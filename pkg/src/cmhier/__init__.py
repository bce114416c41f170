"""Rational Calogero-Moser hierarchy in continuous, discrete and semi-discrete
time, with residual evaluators for every identity of its multi-time
variational structure."""

from .errors import (
    CollisionSingularity,
    DegenerateDirection,
    LogSingularity,
    NonConvergence,
    ParseError,
    ScenarioError,
    SingularJacobian,
    SingularMatrix,
    ValidationError,
)
from .hierarchy import CouplingConvention, PhaseState, VelocityState
from .numerics import NewtonSettings

__version__ = "0.1.0"

__all__ = [
    "CollisionSingularity",
    "CouplingConvention",
    "DegenerateDirection",
    "LogSingularity",
    "NewtonSettings",
    "NonConvergence",
    "ParseError",
    "PhaseState",
    "ScenarioError",
    "SingularJacobian",
    "SingularMatrix",
    "ValidationError",
    "VelocityState",
    "__version__",
]
