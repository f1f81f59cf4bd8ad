"""Exception and warning types raised by the solver."""


class DomainError(ValueError):
    """Input outside the domain of an operation (e.g. evaluation at the origin)."""


class StepTooLarge(ArithmeticError):
    """Angular increment between consecutive samples is too large to lift the argument."""


class IntegrationError(RuntimeError):
    """Base class for integrator failures; carries the partial trajectory if any."""

    def __init__(self, message, trajectory=None, t=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.t = t


class StepFailure(IntegrationError):
    """Step size fell below h_min with the local error still above tolerance."""


class MaxStepsExceeded(IntegrationError):
    """The step budget ran out before the end of the interval."""


class FictitiousTimeExceeded(IntegrationError):
    """The regularized flow hit its fictitious-time cap before reaching the target time."""


class CollisionBeforeT(RuntimeError):
    """A rectilinear backward solution reaches the origin before t = -T."""

    def __init__(self, message, t_col):
        super().__init__(message)
        self.t_col = t_col


class RegularizationRefused(RuntimeError):
    """The friction field fails the sqrt(r)|grad D| -> 0 diagnostic near the origin."""


class ContinuationStalled(RuntimeError):
    """The homotopy step shrank below its floor without the corrector converging."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class VelocityUndefined(ArithmeticError):
    """Physical velocity cannot be recovered from a regularized state at w = 0."""

    def __init__(self, message, position):
        super().__init__(message)
        self.position = position


class ManifoldDriftWarning(RuntimeWarning):
    """The regularized state drifted off its energy manifold and was re-projected."""


class FieldDiagnosticWarning(UserWarning):
    """The friction field looks badly behaved near the origin."""
