"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DCMError(Exception):
    exit_code = 1


class ValidationError(DCMError, ValueError):
    """Bad input: shapes, Hermiticity, covariance, scale separation, step guard."""

    exit_code = 2


class DimensionError(ValidationError):
    pass


class DegenerateTraceError(ValidationError):
    pass


class IndefiniteCovarianceError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class WindowUnderflowError(ValidationError):
    pass


class NumericalBlowupError(DCMError, FloatingPointError):
    exit_code = 3

    def __init__(self, message, t=None, trajectory=None, step=None):
        super().__init__(message)
        self.t = t
        self.trajectory = trajectory
        self.step = step


class NormCollapseError(NumericalBlowupError):
    pass


class InconclusiveError(DCMError):
    """Statistics too noisy to support the requested conclusion."""

    exit_code = 4
