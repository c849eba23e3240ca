"""
Error classes shared by the numerical core and the command-line front end.
Each class carries the process exit code the CLI maps it to.
"""


class CoarseningLabError(Exception):
    """Base class for every error raised by the laboratory"""
    exit_code = 1


class ConfigError(CoarseningLabError, ValueError):
    """Invalid kernel weights, grid parameters or command options"""
    exit_code = 2


class PreconditionError(ConfigError):
    """Input violates the hypotheses of an operation (monotonicity, mean zero, grid alignment)"""


class NumericDomainError(CoarseningLabError, ArithmeticError):
    """A computation left the domain where it is defined or converges"""
    exit_code = 3


class AcceptanceError(CoarseningLabError):
    """One or more acceptance criteria failed"""
    exit_code = 4
