"""Exception hierarchy for isplab."""


class ISPLabError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ISPLabError, ValueError):
    """Raised when operand shapes do not fit together."""


class DomainError(ISPLabError, ValueError):
    """Raised when an argument lies outside the admissible set
    (non-unit vector, entry outside [0, 1], invalid window, ...)."""


class NumericalError(ISPLabError, ArithmeticError):
    """Raised when a numerical routine fails or a built-in consistency
    check trips.

    The offending input is kept on ``payload`` so it can be reported.
    """

    def __init__(self, msg, payload=None):
        super().__init__(msg)
        self.payload = payload


class GridGuardError(ISPLabError):
    """Raised when an exhaustive grid enumeration would exceed its size guard."""


class ConfigError(ISPLabError):
    """Raised for malformed run configurations."""
