"""Exception hierarchy shared by every module.

CLI exit codes are attached to the classes so the command layer can map an
exception to a process status without a lookup table.
"""


class SplineLCError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(SplineLCError, ValueError):
    """Bad user input: shapes, values, files or configuration."""

    exit_code = 2


class DimensionError(InputError):
    pass


class NonFiniteError(InputError):
    """Non-finite values met during evaluation.

    ``layer`` (0-based) is set when the values appeared inside the network,
    ``step`` when they appeared during an iterative procedure.
    """

    def __init__(self, message, layer=None, step=None):
        super().__init__(message)
        self.layer = layer
        self.step = step


class WeightFileError(InputError):
    """Malformed weight file. ``field`` names the offending entry."""

    def __init__(self, message, field):
        super().__init__(f"{field}: {message}")
        self.field = field


class IDXFormatError(InputError):
    def __init__(self, message, field):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConfigError(InputError):
    def __init__(self, message, field):
        super().__init__(f"config field '{field}': {message}")
        self.field = field


class UnsupportedActivationError(SplineLCError):
    exit_code = 3


class DivergenceError(SplineLCError, ArithmeticError):
    """Training produced a non-finite loss; ``log`` holds rows up to the last good checkpoint."""

    def __init__(self, message, log=None, step=None):
        super().__init__(message)
        self.log = log
        self.step = step
