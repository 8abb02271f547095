"""Exception types shared across the package."""


class MMSError(Exception):
    """Base class for all package errors."""


class InputError(MMSError, ValueError):
    """Malformed space, field, family or parameter."""


class UnknownVertexError(InputError, KeyError):
    pass


class DisconnectedError(MMSError):
    """No path joins the requested vertices."""


class InadmissibleSequenceError(MMSError):
    """A density sequence has certified liminf below 1 on some curve."""

    def __init__(self, message, curve_index=None, liminf=None):
        super().__init__(message)
        self.curve_index = curve_index
        self.liminf = liminf


class InvariantViolation(MMSError):
    """A structural inequality that must hold by construction failed."""
