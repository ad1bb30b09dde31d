"""Exception hierarchy.

``DataError`` subclasses indicate invalid input data and map to exit code 2
in the CLI; ``UsageError`` maps to 64; anything else is an internal error (70).
"""


class SignstreamError(Exception):
    """Base class for all library errors."""


class DataError(SignstreamError):
    """Invalid or inconsistent input data."""


class UsageError(SignstreamError):
    """Invalid invocation (bad flags, unknown mode)."""


# -- caption / subtitle ingestion -------------------------------------------

class MalformedCue(DataError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        loc = "" if line is None else f" (line {line}" + ("" if col is None else f", col {col}") + ")"
        super().__init__(message + loc)


class OverlappingCues(DataError):
    pass


class NonMonotonicTimes(DataError):
    pass


# -- manifest -----------------------------------------------------------------

class UnknownSplit(DataError):
    pass


class DuplicateVideoId(DataError):
    pass


class MissingField(DataError):
    pass


# -- stats / metrics ----------------------------------------------------------

class EmptyInput(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DurationMismatch(DataError):
    pass


class EmptyTexts(DataError):
    pass


# -- features / chunking -------------------------------------------------------

class SpanOutOfRange(DataError):
    pass


class NonPositiveDuration(DataError):
    pass


# -- grammar --------------------------------------------------------------------

class CaptionOutsideWindow(DataError):
    pass


class EmptyClip(DataError):
    pass


# -- driver -----------------------------------------------------------------------

class ClipTooLong(DataError):
    pass


class TranslatorFailure(SignstreamError):
    """A translator call failed; carries the window context."""

    def __init__(self, message: str, window_index: int | None = None,
                 window_start_s: float | None = None):
        self.window_index = window_index
        self.window_start_s = window_start_s
        ctx = ""
        if window_index is not None:
            ctx = f" (window {window_index} @ {window_start_s}s)"
        super().__init__(message + ctx)


class LivelockGuardTripped(SignstreamError):
    """The autoregressive loop hit the max window cap before the video end."""

    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)


class DecoherenceDetected(SignstreamError):
    """Aligner output diverged from the input captions beyond the threshold."""
