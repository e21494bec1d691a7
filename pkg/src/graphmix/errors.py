"""Exception hierarchy shared by every module."""


class GraphmixError(Exception):
    """Base class for all errors raised by graphmix."""


class ParameterError(GraphmixError, ValueError):
    """An argument is outside the domain accepted by an operation."""


class ParseError(GraphmixError, ValueError):
    """A text document could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SizeGuardError(ParameterError):
    """An exact or all-pairs computation was refused because the input is too large."""


class ConfigError(ParameterError):
    """An experiment configuration is inconsistent or not certifiable."""


class NoCertifiedProfile(GraphmixError):
    """The field model has no proved mixing profile."""


class ShelterViolation(GraphmixError, AssertionError):
    """The game engine caught a learner reading outcomes it was not allowed to see."""
