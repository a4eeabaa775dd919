"""Structured error hierarchy.

Every invalid input surfaces as a :class:`GapAuditError` subclass so the CLI
can map data problems to exit code 2 and keep internal faults separate.
"""


class GapAuditError(Exception):
    """Base class for all errors raised by this package."""


class GapAuditWarning(UserWarning):
    """Non-fatal conditions (empty cohorts, degenerate resamples, ...)."""


class MissingFile(GapAuditError):
    pass


class SchemaViolation(GapAuditError):
    """Malformed manifest or record content.

    Carries the offending field name and, where known, the record index.
    """

    def __init__(self, message, field=None, record_index=None):
        self.field = field
        self.record_index = record_index
        where = ""
        if record_index is not None:
            where = f" (record {record_index})"
        if field is not None:
            where += f" [field {field!r}]"
        super().__init__(f"{message}{where}")


class EmbeddingShapeMismatch(GapAuditError):
    pass


class NonFiniteEmbedding(GapAuditError):
    pass


class ZeroNormEmbedding(GapAuditError):
    pass


class UnparsablePayload(GapAuditError):
    pass


class MissingField(GapAuditError):
    pass


class InvalidThresholds(GapAuditError):
    pass


class UnknownImageId(GapAuditError):
    pass


class InsufficientSamples(GapAuditError):
    pass


class DegenerateVariance(GapAuditError):
    pass


class DimensionMismatch(GapAuditError):
    pass


class MissingMask(GapAuditError):
    pass


class InfeasibleCounts(GapAuditError):
    pass


class RetriesExhausted(GapAuditError):
    pass


class InvalidConfig(GapAuditError):
    pass
