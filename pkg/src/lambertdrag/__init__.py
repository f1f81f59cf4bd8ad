"""Lambert problem for the Kepler system with position-dependent linear drag."""

from .dynamics import State
from .errors import (
    CollisionBeforeT,
    ContinuationStalled,
    DomainError,
    IntegrationError,
    RegularizationRefused,
)
from .friction import FrictionField
from .integrator import IntegratorConfig, integrate_backward, warm_up
from .lambert import Direction, LambertProblem, SolverOptions, shoot, solve, speed_ceiling
from .rectilinear import RadialProblem, find_beta, radial_flow, solve_rectilinear

__all__ = [
    "CollisionBeforeT",
    "ContinuationStalled",
    "Direction",
    "DomainError",
    "FrictionField",
    "IntegrationError",
    "IntegratorConfig",
    "LambertProblem",
    "RadialProblem",
    "RegularizationRefused",
    "SolverOptions",
    "State",
    "find_beta",
    "integrate_backward",
    "radial_flow",
    "shoot",
    "solve",
    "solve_rectilinear",
    "speed_ceiling",
    "warm_up",
]
