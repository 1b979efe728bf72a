"""Exception hierarchy shared by all modules."""


class DBControlError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(DBControlError, ValueError):
    """An argument is outside its admissible range."""


class UnsupportedGeometryError(DBControlError):
    """The polygon cannot be meshed by the structured initial mesher."""


class HierarchyError(DBControlError):
    """Two meshes are not related by refinement."""


class AssemblyError(DBControlError):
    """A coefficient or load evaluation failed on some element."""

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class FactorizationError(DBControlError):
    """A sparse factorization failed (singular matrix, non-positive pivot)."""


class NumericalBreakdownError(DBControlError, ArithmeticError):
    """Non-finite values appeared in an iterative method."""


class SolverError(DBControlError):
    """An iterative solve did not converge; ``report`` holds the details."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
