"""Exception types shared across the package."""


class SGNNError(Exception):
    pass


class ShapeError(SGNNError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(SGNNError, ValueError):
    """A documented precondition does not hold for the given arguments."""


class NumericError(SGNNError, ArithmeticError):
    """Non-finite values or a solver that failed to converge."""


class ConfigError(SGNNError, ValueError):
    """Invalid or inconsistent configuration."""


class ParseError(SGNNError, ValueError):
    """Malformed input file. Carries the path and 1-based line number when known."""

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
