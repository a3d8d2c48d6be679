"""Exception hierarchy shared across the package.

Two branches matter to callers: DataError (bad input files, malformed
configs, mismatched shapes) and NumericalError (the computation itself
broke down). The service layer and the CLI map them to distinct exit
codes / HTTP payloads.
"""


class HydroidentError(Exception):
    """Base class for all package errors."""


class DataError(HydroidentError):
    """Invalid or inconsistent input data."""


class NumericalError(HydroidentError):
    """Numerical failure during simulation or optimization."""


# --- data errors -----------------------------------------------------------

class ParseError(DataError):
    pass


class NonMonotonicTime(DataError):
    pass


class DuplicateTimestamp(DataError):
    pass


class OutOfRange(DataError):
    pass


class DegeneratePolyline(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class TimeMismatch(DataError):
    pass


class ZeroDirection(DataError):
    pass


class ConfigError(DataError):
    pass


class InvalidModel(DataError):
    """A mechanism description failed validation; carries the violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid mechanism model: {lines}")


# --- numerical errors ------------------------------------------------------

class SingularMass(NumericalError):
    pass


class DivergedSimulation(NumericalError):
    pass


class EigenFailure(NumericalError):
    pass


class NonFiniteFitness(NumericalError):
    pass
