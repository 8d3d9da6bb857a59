"""Exception types shared across the pipeline stages."""


class SamhitaError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(SamhitaError):
    pass


class StageFailure(SamhitaError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ledger
class DuplicateEntryId(SamhitaError):
    pass


class UnknownEntryReference(SamhitaError):
    pass


# dedup
class EmptyText(SamhitaError):
    pass


class EmptyShingleSet(SamhitaError):
    pass


class IncompatibleSignatures(SamhitaError):
    pass


class InvalidBanding(SamhitaError):
    pass


# ocrqa
class EmptyPage(SamhitaError):
    pass


class InvalidThresholds(SamhitaError):
    pass


# validate
class EmptyPassage(SamhitaError):
    pass


class SchemaError(SamhitaError):
    pass


class SpanOutOfBounds(SchemaError):
    pass


class SpanNotFound(SamhitaError):
    pass


class JudgeTransportError(SamhitaError):
    pass


class JudgeUnavailable(SamhitaError):
    def __init__(self, item_id: str, attempts: int):
        super().__init__(f"judge unreachable for item {item_id!r} after {attempts} attempts")
        self.item_id = item_id
        self.attempts = attempts


# audit
class UnknownTask(SamhitaError):
    pass


class InvalidLabel(SamhitaError):
    pass


class LeaseExpired(SamhitaError):
    pass


class LengthMismatch(SamhitaError):
    pass


class EmptyInput(SamhitaError):
    pass


class UnknownStratumKey(SamhitaError):
    pass


# export
class UnacceptedItem(SamhitaError):
    pass


class MissingAnswer(SamhitaError):
    pass


class MissingContext(SamhitaError):
    pass


class MarkerCollision(SamhitaError):
    pass


class MarkerImbalance(SamhitaError):
    pass


class UnknownMarker(SamhitaError):
    pass


# benchreport
class EmptyFacet(SamhitaError):
    pass


class ZeroCount(SamhitaError):
    pass
