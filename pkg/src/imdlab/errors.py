"""Exception hierarchy shared by the library and mapped to CLI exit codes."""


class IMDError(Exception):
    """Base class for all library errors."""

    exit_code = 5


class DomainError(IMDError, ValueError):
    """Argument outside the mathematical domain of a function."""


class UsageError(IMDError, ValueError):
    """Invalid combination of arguments (unsupported order, bad k, ...)."""

    exit_code = 2


class ParityError(UsageError):
    """A count with the wrong parity was requested; its weight is zero."""


class EmptyConditionError(IMDError):
    """Conditioning on a side of the threshold that carries no mass."""

    exit_code = 3


class ClassificationMismatch(UsageError):
    """The requested scaling order k does not match the phase of (J, h)."""

    exit_code = 4


class NotAMaximizerError(IMDError):
    """Second derivative is not negative at the supplied point."""


class WindowError(IMDError):
    """Scanning window did not contain the expected branch jump."""


class NumericalError(IMDError):
    """Internal consistency check failed; signals a numerics bug."""
