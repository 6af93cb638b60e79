"""Exception taxonomy shared by the solvers and the command line front end."""

from __future__ import annotations


class NematicError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class GridError(NematicError, ValueError):
    pass


class ConfigError(NematicError):
    exit_code = 2


class UnknownScenario(ConfigError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class InvalidOverride(ConfigError, ValueError):
    pass


class SolverError(NematicError):
    exit_code = 3


class NotCompatible(SolverError, ValueError):
    """Right-hand side has a component in the nullspace of a singular operator."""


class NotConverged(SolverError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class PicardDiverged(SolverError):
    def __init__(self, message: str, t: float, trace=None):
        super().__init__(f"{message} (t={t:.6g})")
        self.t = t
        self.trace = trace


class CflViolated(SolverError):
    def __init__(self, ratio: float, limit: float):
        super().__init__(f"advective CFL ratio {ratio:.4g} exceeds {limit:.4g}")
        self.ratio = ratio
        self.limit = limit


class EmptySeries(NematicError, ValueError):
    pass


class MismatchedSeries(NematicError, ValueError):
    pass


class VerificationFailed(NematicError):
    exit_code = 4
