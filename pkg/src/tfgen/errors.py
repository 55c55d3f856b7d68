"""Exception hierarchy shared by all tfgen modules."""


class TFGenError(Exception):
    """Base class for every error raised by tfgen."""


class ParameterError(TFGenError, ValueError):
    """A parameter is outside its admissible range."""


class ShapeError(TFGenError, ValueError):
    """Array shapes disagree with each other or with the Gabor system."""


class ConventionError(TFGenError, ValueError):
    """A phase-convention conversion is impossible for this system."""


class UnsupportedSystemError(TFGenError, ValueError):
    """The Gabor system is outside the painless case."""


class IllConditionedFrameError(TFGenError, ValueError):
    """The frame operator diagonal (nearly) vanishes somewhere."""


class UndefinedCorrelationError(TFGenError, ValueError):
    """A correlation was requested on a sample set with zero variance."""


class DegenerateInputError(TFGenError, ValueError):
    """Input carries no information (e.g. an all-zero spectrogram)."""


class RangeError(TFGenError, ValueError):
    """Values fall outside the range a representation allows."""


class FormatError(TFGenError, ValueError):
    """A file does not follow the expected binary layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
