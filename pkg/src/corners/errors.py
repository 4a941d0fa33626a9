"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: validation and domain errors exit 1,
resource/cap errors exit 2, invariant failures exit 3.
"""


class CornersError(Exception):
    exit_code = 1


class ValidationError(CornersError, ValueError):
    """An input object violates one of its documented invariants."""


class DomainError(CornersError, ValueError):
    """A parameter lies outside the domain of an operation."""


class ResourceError(CornersError):
    """A configured size or cap would be exceeded."""

    exit_code = 2

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvariantError(CornersError, AssertionError):
    """A postcondition that should hold by construction did not."""

    exit_code = 3
