"""Exception hierarchy shared by every module."""


class VidCorruptError(Exception):
    pass


class InvalidInputError(VidCorruptError, ValueError):
    pass


class InvalidParameterError(InvalidInputError):
    pass


class ParseError(VidCorruptError):
    """Malformed file content. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class Y4MHeaderError(ParseError):
    pass


class Y4MTruncatedError(ParseError):
    def __init__(self, message, offset=None, frame_index=None):
        self.frame_index = frame_index
        super().__init__(message, offset)


class UnsupportedChromaError(ParseError):
    pass


class BitstreamError(VidCorruptError):
    """Base for .tvc decode failures; ``frame_index`` is None for header problems."""

    def __init__(self, message, frame_index=None):
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)


class BadMagicError(BitstreamError):
    pass


class TruncatedBitstreamError(BitstreamError):
    pass


class CoefficientOverflowError(BitstreamError):
    pass


class MotionVectorRangeError(BitstreamError):
    pass


class ChecksumError(BitstreamError):
    pass


class UnreachableBitrateError(VidCorruptError):
    def __init__(self, target_bps, crf51_bps):
        self.target_bps = target_bps
        self.crf51_bps = crf51_bps
        super().__init__(
            f"target {target_bps:.0f} bit/s unreachable: crf 51 still needs {crf51_bps:.0f} bit/s"
        )


class PipelineError(VidCorruptError):
    def __init__(self, step_index, step, cause):
        self.step_index = step_index
        self.step = step
        self.cause = cause
        super().__init__(f"step {step_index} ({step}) failed: {cause}")
