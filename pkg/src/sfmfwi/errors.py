"""Exception hierarchy shared by every module."""


class SfwiError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SfwiError, ValueError):
    pass


class FormatError(SfwiError):
    """Malformed binary file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class StabilityError(SfwiError):
    def __init__(self, message, required_dt):
        super().__init__(message)
        self.required_dt = required_dt


class DivergenceError(SfwiError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ResourceError(SfwiError):
    pass


class ArchitectureError(SfwiError):
    pass


class StateError(SfwiError):
    pass


class NumericError(SfwiError):
    pass


class ConfigError(SfwiError):
    """Config validation failure; ``problems`` lists every offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
