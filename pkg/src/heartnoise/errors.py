"""Exception types raised across the toolkit."""


class HeartNoiseError(Exception):
    """Base class for every error raised by this package."""


class WavFormatError(HeartNoiseError):
    """Malformed RIFF/WAVE container."""


class UnsupportedCodecError(HeartNoiseError):
    pass


class EmptySignalError(HeartNoiseError):
    pass


class DegenerateSignalError(HeartNoiseError):
    """Signal (or power) is zero where a division needs it non-zero."""


class InvalidArgumentError(HeartNoiseError, ValueError):
    pass


class InvalidBandError(HeartNoiseError, ValueError):
    pass


class SchemaError(HeartNoiseError):
    """A manifest, recipe or config file does not match its schema."""


class MissingAssetError(HeartNoiseError):
    pass


class DuplicateNameError(SchemaError):
    pass


class PlacementError(HeartNoiseError):
    pass


class RecipeError(HeartNoiseError):
    pass


class LeakageError(HeartNoiseError):
    """A base recording would appear in both train and test splits."""


class TooShortError(HeartNoiseError, ValueError):
    pass


class ResolutionError(HeartNoiseError, ValueError):
    pass


class DimensionError(HeartNoiseError, ValueError):
    pass


class DegenerateLabelsError(HeartNoiseError, ValueError):
    pass


class ShapeError(DimensionError):
    pass


class DivergenceError(HeartNoiseError, FloatingPointError):
    pass


class ModelFormatError(HeartNoiseError):
    """Model container is unreadable: bad magic, version or checksum."""


class ChecksumError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class ArchitectureError(ModelFormatError):
    pass


class UndefinedMetricError(HeartNoiseError, ZeroDivisionError):
    pass


class JoinError(HeartNoiseError, KeyError):
    pass


class RepeatError(HeartNoiseError):
    """Failure inside one repeat of a repeated experiment."""

    def __init__(self, repeat: int, cause: BaseException):
        super().__init__(f"repeat {repeat} failed: {cause}")
        self.repeat = repeat
        self.cause = cause
