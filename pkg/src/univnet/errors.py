"""Exception hierarchy shared by every module."""


class UnivNetError(Exception):
    """Base class for all package errors."""


class DimensionError(UnivNetError, ValueError):
    """Tensor shapes or channel counts do not line up."""


class AlignmentError(UnivNetError, ValueError):
    """Waveform and condition frames are not aligned."""


class FormatError(UnivNetError):
    """A file is malformed, truncated or of the wrong kind."""


class SampleRateError(FormatError):
    """Audio is not at the pipeline sample rate."""


class UnsupportedFormatError(FormatError):
    """Audio encoding other than 16-bit PCM mono."""


class NumericError(UnivNetError, FloatingPointError):
    """NaN or Inf detected where finite values are required."""
