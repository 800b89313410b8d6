"""Exception hierarchy shared by the library and the command line.

Every error carries the process exit code the CLI reports for it:
1 for usage, config and input problems, 3 for numeric failures.
"""


class DrnError(Exception):
    exit_code = 1


class ArgumentError(DrnError, ValueError):
    """Shape, index or mode violation in a library call."""


class ConfigError(DrnError):
    pass


class IngestionError(DrnError):
    def __init__(self, message, path=None, line=None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class SplitError(DrnError):
    pass


class EstimationError(DrnError):
    exit_code = 3

    def __init__(self, message, mode=None):
        super().__init__(message if mode is None else f"mode {mode}: {message}")
        self.mode = mode


class TrainingError(DrnError):
    exit_code = 3
