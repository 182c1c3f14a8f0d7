"""Exception types. Each maps to one CLI exit code."""


class PenregError(Exception):
    exit_code = 1
    code = "ERROR"


class ConfigError(PenregError, ValueError):
    exit_code = 2
    code = "CONFIG"


class DataError(PenregError, ValueError):
    exit_code = 3
    code = "DATA"


class NumericError(PenregError, ArithmeticError):
    exit_code = 4
    code = "NUMERIC"
