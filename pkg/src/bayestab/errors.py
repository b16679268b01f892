"""Exception hierarchy shared across the package."""


class BayestabError(Exception):
    """Base class for all package errors."""


class InputError(BayestabError, ValueError):
    """Malformed or inconsistent inputs (dimensions, non-finite entries, ...)."""


class ConfigError(BayestabError, ValueError):
    """Inconsistent run configuration, e.g. time grids that do not align."""


class NumericalFailure(BayestabError, ArithmeticError):
    """A numerical routine did not reach the requested accuracy."""


class CareNoSolution(NumericalFailure):
    """The Riccati equation has no stabilizing solution (model not stabilizable)."""


class IndefiniteSolution(NumericalFailure):
    """The extracted Riccati solution is not positive semidefinite."""
