"""Exception types raised across the package."""


class ObliviousError(Exception):
    """Base class for all package errors."""


class InputShapeError(ObliviousError, ValueError):
    """A point, dataset or code has the wrong width or an out-of-range index."""


class ConfigurationError(ObliviousError, ValueError):
    """Inputs are individually valid but cannot be used together."""


class DomainError(ObliviousError, ValueError):
    """A combinatorial argument lies outside its mathematical domain."""


class CapacityError(ObliviousError):
    """The request exceeds a fixed size limit."""


class FormatError(ObliviousError, ValueError):
    """A file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class EvaluationError(ObliviousError):
    """A game could not be evaluated on the requested coalition."""
