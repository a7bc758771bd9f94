"""UnivNet GAN vocoder on a small numpy autodiff engine."""

from univnet.errors import (
    AlignmentError,
    DimensionError,
    FormatError,
    NumericError,
    SampleRateError,
    UnivNetError,
    UnsupportedFormatError,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "DimensionError",
    "FormatError",
    "NumericError",
    "SampleRateError",
    "UnivNetError",
    "UnsupportedFormatError",
    "__version__",
]
