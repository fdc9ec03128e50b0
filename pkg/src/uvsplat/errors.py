"""Exception types raised across the package."""


class UvSplatError(Exception):
    """Base class for all package errors."""


class MalformedRecord(UvSplatError):
    def __init__(self, lineno, line, reason="unparseable record"):
        self.lineno = lineno
        self.line = line
        super().__init__(f"line {lineno}: {reason}: {line!r}")


class MissingTexCoords(UvSplatError):
    pass


class IndexOutOfRange(UvSplatError):
    pass


class CoordOutOfDomain(UvSplatError):
    pass


class EmptyGaussianSet(UvSplatError):
    pass


class InvalidBackground(UvSplatError):
    pass


class ShapeMismatch(UvSplatError):
    pass


class EmptyTargets(UvSplatError):
    pass


class NonFiniteLoss(UvSplatError):
    """Raised by the fitter when any loss term or gradient stops being finite."""

    def __init__(self, step, name):
        self.step = step
        self.name = name
        super().__init__(f"non-finite value in {name!r} at step {step}")


class LineOutOfBounds(UvSplatError):
    pass


class FormatError(UvSplatError):
    """Binary file header or payload does not match the expected layout."""


class ConfigError(UvSplatError, ValueError):
    """Invalid configuration value; `field` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
