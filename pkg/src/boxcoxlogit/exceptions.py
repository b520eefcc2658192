"""Exception hierarchy.  The CLI maps these onto exit codes."""


class BoxCoxError(Exception):
    """Base class for package errors."""


class DomainError(BoxCoxError, ValueError):
    """Input outside the mathematical domain (x <= 0, lambda < 0, ...)."""


class DataValidationError(BoxCoxError, ValueError):
    """A dataset or input file failed validation."""


class NumericalError(BoxCoxError, ArithmeticError):
    """Base class for numerical failures."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration limit."""


class SeparationError(NumericalError):
    """Logistic coefficients diverged (complete or quasi-complete separation)."""


class SingularInformationError(NumericalError):
    """An information matrix is singular or not positive definite."""
