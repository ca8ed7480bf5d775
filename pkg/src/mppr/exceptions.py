"""Exception types raised across the package."""


class MpprError(Exception):
    """Base class for all package errors."""


class GraphFormatError(MpprError, ValueError):
    """A graph input file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ShapeError(MpprError, ValueError):
    pass


class DomainError(MpprError, ValueError):
    pass


class SolverError(MpprError, RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (last residual {residual:.3e})")


class SplitError(MpprError, ValueError):
    pass


class CapacityError(MpprError, ValueError):
    pass


class UndefinedMetricError(MpprError, ValueError):
    pass


class ConfigError(MpprError, ValueError):
    pass
