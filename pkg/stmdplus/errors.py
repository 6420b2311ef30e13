"""
Error hierarchy shared by every stage.

Each class carries the process exit code the CLI maps it to:
1 configuration / parameter problems, 2 frame or record I/O, 3 invalid runtime state.
"""


class StmdPlusError(Exception):
    exit_code = 1


class InvalidParameterError(StmdPlusError, ValueError):
    exit_code = 1


class ConfigError(StmdPlusError):
    exit_code = 1


class InvalidSpecError(StmdPlusError, ValueError):
    exit_code = 1


class FrameIOError(StmdPlusError, OSError):
    exit_code = 2


class InvalidStateError(StmdPlusError, RuntimeError):
    exit_code = 3


class UndefinedDirectionError(InvalidStateError):
    """All directional responses are zero, so no direction can be estimated."""
