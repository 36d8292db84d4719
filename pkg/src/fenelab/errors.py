"""Exception hierarchy shared by all fenelab modules.

Every error raised deliberately by the library derives from
:class:`FenelabError`, so callers (notably the command-line harness) can
distinguish structured model/solver failures from programming errors.
"""

from __future__ import annotations

from typing import Any


class FenelabError(Exception):
    """Base class for all structured errors raised by fenelab."""


class ParameterError(FenelabError, ValueError):
    """Model parameters violate a standing assumption (e.g. ``gamma < 1``)."""


class DomainError(FenelabError, ValueError):
    """An input lies outside the domain of a function (e.g. ``|R| >= 1``)."""


class ShapeError(FenelabError, ValueError):
    """Array arguments have incompatible shapes."""


class PreconditionError(FenelabError, ValueError):
    """A documented precondition of an operation does not hold."""


class NumericalError(FenelabError, ArithmeticError):
    """A numerical kernel failed or produced an invariant violation.

    Parameters
    ----------
    message : str
        Human-readable description.
    condition : float, optional
        Condition estimate or other diagnostic attached to the failure.
    """

    def __init__(self, message: str, condition: float | None = None) -> None:
        super().__init__(message)
        self.condition = condition


class AccuracyError(NumericalError):
    """An adaptive quadrature did not reach the requested tolerance.

    Parameters
    ----------
    message : str
        Human-readable description.
    achieved : float
        Relative accuracy actually achieved.
    """

    def __init__(self, message: str, achieved: float) -> None:
        super().__init__(message, condition=achieved)
        self.achieved = achieved


class DivergentIntegralError(AccuracyError):
    """A one-dimensional integral is (numerically) not convergent."""


class DegenerateSpectrumError(NumericalError):
    """The eigenvalue projection formula was requested at a degenerate frequency."""


class StepRejected(FenelabError, RuntimeError):
    """A time step violates the advective CFL restriction.

    Parameters
    ----------
    message : str
        Human-readable description.
    admissible_dt : float
        Largest time step allowed by the CFL condition for the current state.
    """

    def __init__(self, message: str, admissible_dt: float) -> None:
        super().__init__(message)
        self.admissible_dt = admissible_dt


class NonvacuumError(FenelabError, RuntimeError):
    """The density perturbation reached ``1 + rho <= 0`` somewhere on the grid.

    Parameters
    ----------
    message : str
        Human-readable description.
    state : Any
        The offending state (kept for post-mortem inspection).
    """

    def __init__(self, message: str, state: Any = None) -> None:
        super().__init__(message)
        self.state = state


class ContractionFailure(FenelabError, RuntimeError):
    """Picard iterate distances increased for several consecutive iterations.

    Parameters
    ----------
    message : str
        Human-readable description.
    distances : list of float
        The iterate distances computed so far.
    """

    def __init__(self, message: str, distances: list[float]) -> None:
        super().__init__(message)
        self.distances = list(distances)


class ConstructionError(FenelabError, ValueError):
    """An initial condition cannot be built with the requested properties."""


class ConfigError(FenelabError, ValueError):
    """A run configuration file is malformed.

    Parameters
    ----------
    message : str
        Human-readable description.
    line : int, optional
        1-based line number of the offending entry.
    key : str, optional
        Offending key or section name.
    """

    def __init__(self, message: str, line: int | None = None, key: str | None = None) -> None:
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class PositivityWarning(UserWarning):
    """``1 + g`` became nonpositive at some node (flagged, not fatal)."""
