"""Exception hierarchy shared by every module."""


class MesoWignerError(Exception):
    pass


class ConfigurationError(MesoWignerError, ValueError):
    """Invalid configuration field or argument combination."""


class DomainError(MesoWignerError, ValueError):
    """Argument outside the mathematical domain of an operation (e.g. Im z = 0)."""


class ContractViolation(MesoWignerError, ValueError):
    """Input breaks a structural precondition, such as a non-Hermitian matrix."""


class NumericalError(MesoWignerError, RuntimeError):
    """A numerical method failed to reach its target accuracy.

    ``report`` carries whatever the failing routine knows (achieved error,
    provenance of the matrix, offending eigenvalue, ...).
    """

    def __init__(self, message, **report):
        super().__init__(message)
        self.report = report


class ExperimentError(NumericalError):
    """Too many Monte Carlo samples aborted with numerical errors."""
