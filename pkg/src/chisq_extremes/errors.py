"""Exception hierarchy. The CLI maps each family to an exit status."""


class ChisqExtremesError(Exception):
    exit_code = 1


class ParameterError(ChisqExtremesError, ValueError):
    """Invalid parameter value or configuration field."""

    exit_code = 2


class DomainError(ParameterError):
    """Argument outside the domain of a kernel or coefficient function."""


class ModelError(ParameterError):
    """A LocalModel violates its invariants (e.g. nonpositive local variance)."""


class TableRangeError(ParameterError):
    """Query outside the tabulated grid-constant range of a PickandsTable."""


class ArtifactError(ParameterError):
    """Artifact cannot be replayed (checksum or version mismatch)."""


class ResourceError(ChisqExtremesError):
    exit_code = 3


class NumericalError(ChisqExtremesError):
    exit_code = 4


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, message, pivot=None, jitter=None):
        super().__init__(message)
        self.pivot = pivot
        self.jitter = jitter
