"""Exception taxonomy shared across the package.

Every error raised by logsplat derives from LogsplatError so callers (CLI,
service layer) can map failures to exit codes / HTTP responses in one place.
"""


class LogsplatError(Exception):
    """Base class for all logsplat errors."""


# --- log parsing / dataset layout ---

class MissingFile(LogsplatError):
    pass


class SchemaViolation(LogsplatError):
    """Manifest or config does not conform to the documented layout.

    The message always names the offending field.
    """


class TimestampOrderViolation(LogsplatError):
    pass


class UnknownCameraId(LogsplatError):
    pass


class EmptyTrack(LogsplatError):
    pass


# --- camera models ---

class OutOfImage(LogsplatError):
    pass


class RootFindFailure(LogsplatError):
    pass


class BehindCamera(LogsplatError):
    pass


# --- geometry ---

class CameraInsideTarget(LogsplatError):
    pass


# --- gaussian assets ---

class CoeffCountMismatch(LogsplatError):
    pass


class BlockSizeMismatch(LogsplatError):
    pass


class ShapeMismatch(LogsplatError):
    pass


class CorruptHeader(LogsplatError):
    pass


class TruncatedPayload(LogsplatError):
    pass


class AssetLoadError(LogsplatError):
    pass


# --- flow matching ---

class DimMismatch(LogsplatError):
    pass


class EmptyViewSet(LogsplatError):
    pass


class NonFiniteState(LogsplatError):
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


# --- metrics ---

class EmptyRenderMask(LogsplatError):
    pass


class EmptyGtMask(LogsplatError):
    pass


class NoForegroundPatches(LogsplatError):
    pass


class ZeroEmbedding(LogsplatError):
    pass


class InsufficientKeypoints(LogsplatError):
    pass


class NoCommonParts(LogsplatError):
    pass


class UnknownClass(LogsplatError):
    pass


class JudgeTransportError(LogsplatError):
    """Network/transport failure talking to the judge endpoint.

    Kept distinct from reply-format problems, which are not exceptions at
    all: an unparseable reply resolves to the ERROR verdict.
    """


# --- pipeline ---

class MissingExternalOutputs(LogsplatError):
    pass


class NoHeldOutViews(LogsplatError):
    pass


class ConfigError(LogsplatError):
    pass


class ServiceError(LogsplatError):
    """A service call came back with an error response."""
