"""Numerical toolkit for exterior isoperimetric geometry."""

__version__ = "0.1.0"


class ExigeoError(Exception):
    """Base class for toolkit errors."""


class ValidationError(ExigeoError, ValueError):
    """Input rejected before any numerics ran."""


class NumericalError(ExigeoError, RuntimeError):
    """A numerical procedure failed to converge or lost accuracy."""
