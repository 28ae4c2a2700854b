"""Exception types shared across the package."""


class FadeKitError(Exception):
    """Base class for package errors."""


class ConfigError(FadeKitError, ValueError):
    """Invalid parameter value, unknown config key, or missing required key."""


class FrameFormatError(FadeKitError, ValueError):
    """A frame file is unreadable or inconsistent with the rest of a sequence."""


class AnnotationError(FadeKitError, ValueError):
    """Malformed ground-truth annotation or metadata record."""


class SynthSpecError(FadeKitError, ValueError):
    """Synthetic video description cannot be realized."""
