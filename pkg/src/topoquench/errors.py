"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: symmetry violations exit with 2,
inadmissible grids with 3, anything else with 1.
"""


class TopoQuenchError(Exception):
    """Base class for all errors raised by the package."""


class InvalidParameterError(TopoQuenchError, ValueError):
    pass


class InvalidCompositionError(TopoQuenchError, ValueError):
    pass


class InvalidInputError(TopoQuenchError, ValueError):
    pass


class InvalidWindowError(TopoQuenchError, ValueError):
    pass


class InvalidTrajectoryError(TopoQuenchError, ValueError):
    pass


class InvalidGridError(TopoQuenchError, ValueError):
    pass


class InvalidPropagatorError(TopoQuenchError, ValueError):
    pass


class NumericError(TopoQuenchError, ArithmeticError):
    pass


class DegenerateSpectrumError(TopoQuenchError):
    """Occupied and empty bands touch at some grid point."""

    def __init__(self, message, k=None, gap=None):
        super().__init__(message)
        self.k = k
        self.gap = gap


class InadmissibleGridError(TopoQuenchError):
    """Neighbouring states overlap too weakly for a lattice index.

    Carries the worst offending momentum, its overlap magnitude and, when
    raised from a time series, the time stamp.
    """

    def __init__(self, message, k=None, overlap=None, time=None):
        super().__init__(message)
        self.k = k
        self.overlap = overlap
        self.time = time


class InadmissibleLoopError(InadmissibleGridError):
    pass


class SymmetryViolationError(TopoQuenchError):
    def __init__(self, message, residual=None, time=None):
        super().__init__(message)
        self.residual = residual
        self.time = time


class ConfigError(TopoQuenchError, ValueError):
    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key
