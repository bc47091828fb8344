"""Exception hierarchy shared by all genreforge modules."""


class GenreForgeError(Exception):
    """Base class for every error raised by this package."""


class FormatError(GenreForgeError, ValueError):
    """A binary container (WAV, cache, checkpoint) could not be parsed."""


class ShapeError(GenreForgeError, ValueError):
    pass


class ConfigError(GenreForgeError, ValueError):
    pass


class SliceError(GenreForgeError, ValueError):
    """A spectrogram is too short for the requested number of slices."""

    def __init__(self, message, max_count):
        super().__init__(message)
        self.max_count = max_count


class DurationError(GenreForgeError, ValueError):
    pass


class ManifestError(GenreForgeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DivergenceError(GenreForgeError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""
