"""Exception hierarchy shared across the toolkit.

Each top-level branch maps to a CLI exit code: ConfigError -> 2,
DataError -> 3, NumericFault -> 4, ArtifactIOError -> 5.
"""


class EvsevError(Exception):
    exit_code = 1


class ConfigError(EvsevError):
    exit_code = 2


class DataError(EvsevError):
    exit_code = 3


class SchemaMismatchError(DataError):
    pass


class DuplicateColumnError(DataError):
    pass


class InvalidSeverityError(DataError):
    pass


class UnimputableColumnError(DataError):
    pass


class UnfittedStateError(DataError):
    pass


class SingletonClassError(DataError):
    pass


class AbsentClassError(DataError):
    pass


class LineageError(DataError):
    """A fit-type operation was handed data from the wrong partition."""


class EnvelopeError(DataError):
    """Input falls outside the pretraining envelope of the in-context model."""


class NumericFault(EvsevError):
    """NaN or Inf appeared where finite values are required."""

    exit_code = 4


class ArtifactIOError(EvsevError):
    exit_code = 5
