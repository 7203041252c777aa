"""Exception types shared across the library."""


class MapcoreError(Exception):
    """Base class for errors raised by this library."""


class ValidationError(MapcoreError, ValueError):
    """An argument, configuration value, or input combination is invalid."""


class PixelOutOfBoundsError(ValidationError):
    """A pixel coordinate lies outside the image."""


class AboveHorizonError(ValidationError):
    """Effective pitch reached +/-90 deg; the ray has no horizontal component."""


class InvalidDepthError(ValidationError):
    """Depth values must be strictly positive."""


class PoleProximityError(ValidationError):
    """Latitude too close to a pole for the cos(lat) longitude scaling."""


class NotVisibleError(ValidationError):
    """Target is behind the camera or projects outside the frame."""


class NoDepthError(MapcoreError):
    """No valid depth pixel under a detection."""


class FormatError(MapcoreError):
    """Malformed or unsupported file content."""


class EmptyReportError(MapcoreError):
    """An evaluation ended up with zero evaluated pixels or pairs."""
