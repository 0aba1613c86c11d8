"""Exception and warning types shared across the package."""


class PolarPolyError(Exception):
    """Base class for errors raised by polarpoly."""


class DimensionError(PolarPolyError, ValueError):
    """Array lengths or shapes that must agree do not."""


class DomainError(PolarPolyError, ValueError):
    """A point lies outside the region an operation is defined on."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ParameterError(PolarPolyError, ValueError):
    """A configuration value or argument is out of its valid range."""


class DegenerateGeometryWarning(UserWarning):
    """Zero-area or otherwise degenerate geometry reached a metric."""
