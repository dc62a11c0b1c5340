"""Exception hierarchy.

Errors are split into data problems (bad input files, degenerate class
balance) and everything else, so the CLI can map them to exit codes.
"""


class AFSmoteError(Exception):
    """Base class for all package errors."""


class DataError(AFSmoteError):
    """Input data violates a precondition."""


class MissingColumn(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row, col, value):
        super().__init__(f"non-numeric cell at row {row}, column {col!r}: {value!r}")
        self.row = row
        self.col = col


class EmptyFile(DataError):
    pass


class NaNPolicyViolation(DataError):
    pass


class TooFewPositives(DataError):
    pass


class NonPositiveDefiniteCovariance(DataError):
    pass


class SingleClassInput(DataError):
    pass


class TooFewMinority(DataError):
    pass


class TooFewSamples(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class KTooLarge(DataError):
    pass


class EmptyHoldout(DataError):
    pass


class SamplerFallback(AFSmoteError):
    """Raised by samplers in strict mode instead of silently falling back."""


class EmptyDangerSet(SamplerFallback):
    pass


class NoSupportVectors(SamplerFallback):
    pass


class AllSafe(SamplerFallback):
    pass


class DivergenceDetected(AFSmoteError):
    pass


class UnfittedMap(AFSmoteError):
    pass


class ConfigError(AFSmoteError):
    """Unknown or invalid configuration key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
