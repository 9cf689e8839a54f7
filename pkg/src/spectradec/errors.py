"""Exception types shared across the package."""


class SpectraDecError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedFormatError(SpectraDecError):
    """File is not one of the supported image formats."""


class CorruptDataError(SpectraDecError):
    """File header or payload is malformed."""


class ChannelCountError(SpectraDecError, ValueError):
    """Operation received an image with the wrong number of channels."""


class DimensionMismatchError(SpectraDecError, ValueError):
    """Two operands that must share a shape do not."""


class IndivisibleDimensionsError(SpectraDecError, ValueError):
    """Image dimensions are not divisible by the requested patch grid."""


class PatchCountMismatchError(SpectraDecError, ValueError):
    """Number of patches does not match the grid being stitched."""


class CallbackShapeError(SpectraDecError, ValueError):
    """A restore callback returned an image of the wrong size."""


class CutoffRangeError(SpectraDecError, ValueError):
    """Frequency cutoff k lies outside the spectrum index range."""


class LengthMismatchError(SpectraDecError, ValueError):
    """Flat coefficient sequence has the wrong length for its plane."""


class PartitionMismatchError(SpectraDecError, ValueError):
    """Window array is inconsistent with its partition metadata."""


class WeightShapeError(SpectraDecError, ValueError):
    """Supplied linear-map weights have incompatible shapes."""


class NonFiniteInputError(SpectraDecError, ValueError):
    """Input contains NaN or infinity where finite values are required."""


class IncompatibleStackError(SpectraDecError, ValueError):
    """Layer widths of a window stack do not chain together."""


class ImageTooSmallError(SpectraDecError, ValueError):
    """Image is smaller than the metric's local window."""


class EmptyInputError(SpectraDecError, ValueError):
    """Operation requires at least one element."""


class InsufficientImagesError(SpectraDecError, ValueError):
    """Corpus does not contain enough images for the requested splits."""


class InsufficientSpecsError(SpectraDecError, ValueError):
    """Benchmark build requires at least one degradation spec."""


class MissingPairError(SpectraDecError):
    """Restored/ground-truth directories do not pair up one-to-one."""


class CodecError(SpectraDecError):
    """Underlying image codec failed to encode or decode."""
