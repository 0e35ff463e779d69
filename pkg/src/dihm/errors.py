"""Exception and warning classes shared across the package.

The CLI prints ``<ClassName>: <message>`` for any :class:`DihmError`, so the
class names double as machine-parsable error tags.
"""


class DihmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DihmError, ValueError):
    """Invalid optical, solver or run configuration."""


class ShapeError(DihmError, ValueError):
    """Array dimensions disagree with each other or with a configuration."""


class InputError(DihmError, ValueError):
    """Input data is missing, insufficient or degenerate."""


class DomainError(DihmError, ValueError):
    """A physical quantity lies outside its admissible range."""


class NumericalDivergenceError(DihmError, ArithmeticError):
    """Non-finite values appeared during an iterative solve."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite values at iteration {iteration}")


class FormatError(DihmError, ValueError):
    """A file does not follow the expected on-disk layout."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class ShadowDensityWarning(UserWarning):
    """Particle field is beyond the trusted shadow-density regime."""


class NormalizationWarning(UserWarning):
    """A depth profile could not be normalized by its surface bin."""
