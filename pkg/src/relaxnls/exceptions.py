"""Exception hierarchy for relaxnls."""


class RelaxNLSError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RelaxNLSError, ValueError):
    """Invalid user input (exit code 2 in the CLI)."""


class InvalidDimensionError(ConfigurationError):
    pass


class OutOfDomainError(ConfigurationError):
    pass


class UnsupportedOrderError(ConfigurationError):
    pass


class ComplexWeightError(ConfigurationError):
    pass


class NonPositiveInputError(ConfigurationError):
    pass


class CriticalMassError(ConfigurationError):
    """Focusing critical problem with Gamma(u0) >= 1; the H1 norm may blow up."""


class SolverError(RelaxNLSError, ArithmeticError):
    """Numerical failure while stepping (exit code 3 in the CLI)."""


class SingularMatrixError(SolverError):
    pass


class OrderOfComputationError(RelaxNLSError, RuntimeError):
    """A quantity was requested before the data it depends on exists."""
