"""Exception hierarchy.

The CLI maps these onto exit codes: syntax problems in a config file exit
with 2, construction/validation failures with 3 and numerical faults with 4.
"""


class QTrajError(Exception):
    """Base class for all errors raised by the package."""


class ConfigSyntaxError(QTrajError, ValueError):
    """Malformed configuration text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConstructionError(QTrajError, ValueError):
    """An element or composite could not be assembled as requested."""


class ConfigError(ConstructionError):
    """Semantically invalid parameters (bad dimensions, missing timescale, ...)."""


class NumericalError(QTrajError, ArithmeticError):
    """Base class for faults that happen while evolving a state."""


class DegenerateStateError(NumericalError):
    """A state vector collapsed to (numerically) zero norm."""


class StiffnessError(NumericalError):
    """The adaptive stepper shrank its step below the representable scale."""


class StepSizeError(NumericalError):
    """The jump probability of a step reached one; dplimit is badly violated."""
