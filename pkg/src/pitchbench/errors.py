"""Exception types raised across pitchbench."""


class PitchbenchError(Exception):
    """Base class for all pitchbench errors."""


class AudioFormatError(PitchbenchError):
    """Unsupported audio encoding or layout."""


class ParseError(PitchbenchError):
    """Malformed input file.

    ``offset`` is a byte offset for binary formats and a 1-based line
    number for text formats.
    """

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ContourFormatError(PitchbenchError):
    """A contour file cannot be mapped onto the requested frame grid."""


class AlignmentError(PitchbenchError):
    """Two contours do not share a frame grid."""


class InfeasibleRoomError(PitchbenchError):
    """The requested reverberation time cannot be produced by the room."""

    def __init__(self, message, min_t60=None):
        super().__init__(message)
        self.min_t60 = min_t60
