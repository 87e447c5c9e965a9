"""Exception hierarchy shared by every module."""


class DepthFuseError(Exception):
    """Base class for all errors raised by depthfuse."""


class ZeroBaseline(DepthFuseError):
    pass


class DegenerateLine(DepthFuseError):
    pass


class InvalidRange(DepthFuseError, ValueError):
    pass


class ChannelMismatch(DepthFuseError, ValueError):
    pass


class ShapeMismatch(DepthFuseError, ValueError):
    pass


class NonPositiveDepth(DepthFuseError, ValueError):
    pass


class EmptyMask(DepthFuseError, ValueError):
    pass


class ImageTooSmall(DepthFuseError, ValueError):
    pass


class NoVoPoints(DepthFuseError, ValueError):
    pass


class SingularSystem(DepthFuseError):
    pass


class TooLarge(DepthFuseError, ValueError):
    pass


class NoValidPixels(DepthFuseError, ValueError):
    pass


class EmptyList(DepthFuseError, ValueError):
    pass


class InvalidSpec(DepthFuseError, ValueError):
    pass


class BadFormat(DepthFuseError, ValueError):
    pass


class ParseError(DepthFuseError, ValueError):
    """Malformed text input. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class OutOfBounds(DepthFuseError, ValueError):
    pass


class NotARotation(DepthFuseError, ValueError):
    pass


class ConfigError(DepthFuseError, ValueError):
    pass
