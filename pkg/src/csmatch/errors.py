"""Exception hierarchy.

Input problems derive from :class:`ValidationError` (CLI exit code 2);
numerical defects derive from :class:`SolverFailure` (exit code 3).
"""


class CSMError(Exception):
    """Base class for all package errors."""


class ValidationError(CSMError, ValueError):
    """Invalid user input: files, schema, or configuration."""


class MissingColumn(ValidationError):
    pass


class NonBinaryTreatment(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class NoTreatedUnits(ValidationError):
    pass


class NoControlUnits(ValidationError):
    pass


class DuplicateId(ValidationError):
    pass


class ConstantNonBinaryColumn(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyControlPool(ValidationError):
    pass


class EmptySubset(ValidationError):
    pass


class AllZeroWeights(ValidationError):
    pass


class NoMultiUnitClusters(CSMError):
    """No matched cluster has two or more controls, so S^2 is undefined."""


class InsufficientControls(ValidationError):
    pass


class SizeLimitExceeded(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class SolverFailure(CSMError, RuntimeError):
    """An optimizer failed on a problem that should always be solvable."""
