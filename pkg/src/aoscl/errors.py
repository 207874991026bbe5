"""Exception types shared across the package."""


class AosError(Exception):
    """Base class for all package errors."""


class StructuralMismatchError(AosError, ValueError):
    """Two parameter sets do not share names, shapes or group tags."""


class NumericError(AosError, ArithmeticError):
    """A non-finite value showed up in a loss, gradient or parameter."""

    def __init__(self, message, entry=None):
        super().__init__(message)
        self.entry = entry


class FeasibilityError(AosError, ValueError):
    """A CTC target cannot be aligned to the available number of frames."""


class SpecError(AosError, ValueError):
    """Invalid stream or run configuration."""
