"""Shared exception types, one per failure mode surfaced by the engine."""


class CellcastError(Exception):
    """Base class for everything raised by this package."""


# notebook parsing
class MalformedDocument(CellcastError):
    pass


class UnsupportedVersion(CellcastError):
    pass


class DecodeError(CellcastError):
    pass


# logic flow
class InvalidBoundary(CellcastError):
    pass


class UnknownNode(CellcastError):
    pass


# LLM bridge
class ProviderUnreachable(CellcastError):
    pass


class SchemaInvalid(CellcastError):
    pass


class FixtureMiss(CellcastError):
    pass


# design script
class SpanOutOfBounds(CellcastError):
    pass


class SpanOverlap(CellcastError):
    pass


class EmptyAnnotation(CellcastError):
    pass


class TooManyLinks(CellcastError):
    pass


class UnknownId(CellcastError):
    pass


class SchemaViolation(CellcastError):
    """Raised with a path diagnostic, e.g. 'scenes[0].segments[2].linked_emphasis'."""


class EmptyText(CellcastError):
    pass


# narration / TTS
class UnknownCell(CellcastError):
    pass


class UnknownScene(CellcastError):
    pass


class AlreadyInteractive(CellcastError):
    pass


# timeline / render
class MissingAudio(CellcastError):
    pass


class OutOfRange(CellcastError):
    pass


class EncoderSpawnFailure(CellcastError):
    pass


class EncoderNonZeroExit(CellcastError):
    pass


# service
class VersionConflict(CellcastError):
    pass
