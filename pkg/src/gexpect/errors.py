"""Exception hierarchy shared by the engines and the CLI."""


class GExpectError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GExpectError, ValueError):
    """A run configuration cannot be executed (CFL, leaf budget, missing driver)."""


class InvalidArgumentError(GExpectError, ValueError):
    pass


class UnsupportedDimensionError(GExpectError, NotImplementedError):
    pass


class PhiSyntaxError(GExpectError, ValueError):
    """Malformed functional source; ``position`` is the 0-based offset."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
