"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class AmortCDError(Exception):
    exit_code = 1


class ConfigError(AmortCDError, ValueError):
    exit_code = 2


class ParameterError(ConfigError):
    """Invalid distribution or mechanism parameters."""


class DataIOError(AmortCDError, OSError):
    exit_code = 3


class ParseError(DataIOError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NumericError(AmortCDError, ArithmeticError):
    exit_code = 4


class DegenerateColumnError(NumericError):
    """A column (or vector) has zero empirical variance."""


class DivergenceError(NumericError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class UndefinedPointError(NumericError):
    """A closed-form expression has a vanishing denominator at the requested point."""


class ContractError(AmortCDError, ValueError):
    exit_code = 5


class ShapeError(ContractError):
    pass


class UnsupportedPointwiseError(ContractError):
    pass


class InvertibilityError(ContractError):
    pass
