"""Exception hierarchy shared across the package."""


class SafeControlError(Exception):
    """Base class for every error raised by safectl."""


class DimensionError(SafeControlError, ValueError):
    """Vector or matrix shapes are not conformable."""


class ModelEvalError(SafeControlError):
    """A user-supplied dynamics callback failed or returned garbage."""


class HistoryError(SafeControlError):
    """Not enough past noise samples for a disturbance-action policy."""


class DegenerateConstraint(SafeControlError, ValueError):
    """A halfspace with an all-zero normal vector."""


class ConfigError(SafeControlError, ValueError):
    """Invalid scenario or algorithm configuration."""


class SafeSetEmpty(SafeControlError):
    """The safe decision set at some step contains no point.

    This violates the standing assumption that a safe controller exists, so it
    usually means the scenario is misconfigured (noise bound too large,
    constraints too tight, or the state drifted where no input can recover).
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalError(SafeControlError):
    """An iterative routine failed to converge."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation
