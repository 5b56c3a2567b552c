"""Exception types shared across the package."""


class PupilkitError(Exception):
    """Base class for all package-specific errors."""


class ImageError(PupilkitError, ValueError):
    """Invalid image data or image geometry (bad dims, out-of-bounds crop)."""


class ImageIOError(PupilkitError):
    """Unreadable or malformed image file."""


class FitError(PupilkitError, ValueError):
    """Ellipse fit cannot be computed (too few points, degenerate layout)."""


class SamplingError(PupilkitError, ValueError):
    """Intensity sampling produced no usable samples (all out of bounds)."""


class ConfigError(PupilkitError, ValueError):
    """Malformed config file: bad syntax, unknown key, or bad value."""


class GroundTruthError(PupilkitError, ValueError):
    """Malformed ground-truth file. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line
