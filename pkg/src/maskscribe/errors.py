"""Exception types shared across the package."""


class MaskscribeError(Exception):
    """Base class for all package-specific errors."""


class EmptyMask(MaskscribeError):
    """An operation required at least one foreground pixel."""


class ShapeMismatch(MaskscribeError):
    """Tensor or raster shapes are incompatible."""


class NonPositiveTau(MaskscribeError):
    """A similarity temperature was not strictly positive."""


class NonFiniteGradient(MaskscribeError):
    """An analytic gradient contains NaN or infinity."""


class ParseFailure(MaskscribeError):
    """A sentence matched none of the known templates."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(message)
        self.position = position


class ConfigError(MaskscribeError):
    """A configuration file is malformed or inconsistent."""


class MissingFile(MaskscribeError):
    """A manifest references a file that does not exist."""


class PaletteGap(MaskscribeError):
    """A mask contains a value with no palette entry."""

    def __init__(self, value, path=None):
        message = f"no palette entry for mask value {value!r}"
        if path is not None:
            message += f" in {path}"
        super().__init__(message)
        self.value = value
        self.path = path


class DecodeError(MaskscribeError):
    """An image file could not be decoded."""


class ClassOutOfRange(MaskscribeError):
    """A label value exceeds the configured class count."""


class EmptyConfusion(MaskscribeError):
    """Metrics were requested for a confusion matrix with no pixels."""
