"""Exception hierarchy.

Input problems derive from ``InputError`` (also a ``ValueError``); failures
of a numerical method derive from ``NumericalError``. The CLI maps the two
families to distinct exit codes.
"""


class QuantflowError(Exception):
    """Base class for all package errors."""


class InputError(QuantflowError, ValueError):
    """Invalid parameters or data supplied by the caller."""


class NumericalError(QuantflowError, ArithmeticError):
    """A numerical method could not proceed."""


class QuadratureError(NumericalError):
    """Non-finite integrand value at a quadrature node."""

    def __init__(self, node: float, value: float):
        super().__init__(f"integrand is not finite at node {node!r} (value {value!r})")
        self.node = node
        self.value = value


class DegenerateDensityError(NumericalError):
    """A density integrates to zero (or is otherwise unusable)."""


class GradientUndefinedError(NumericalError):
    """Gradient requested at a configuration with coincident points."""


class StiffnessError(NumericalError):
    """Step size underflow in a point-flow integrator."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (offending index {index})")
        self.index = index


class DegeneracyError(NumericalError):
    """Vanishing slope of a Lagrangian map."""

    def __init__(self, message: str, location: float):
        super().__init__(f"{message} (at theta={location:.6g})")
        self.location = location


class BlowDownError(NumericalError):
    """Eulerian density reached zero."""


class SmoothnessError(InputError):
    """A density lacks the derivatives an operation needs."""


class SingularityError(NumericalError):
    """Nonpositive determinant in the lattice energy."""


class DomainError(NumericalError):
    """Argument outside the domain of a formula (e.g. negative radicand)."""

    def __init__(self, message: str, index=None):
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)
        self.index = index


class ResolutionError(NumericalError):
    """Quadrature grid too coarse for the requested quantity."""
