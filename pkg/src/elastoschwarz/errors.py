"""Exception hierarchy shared by the analysis, discretization and solver layers."""


class ElastoSchwarzError(Exception):
    """Base class for all package errors."""


class DomainError(ElastoSchwarzError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(ElastoSchwarzError, ValueError):
    """An operation was called with an unsupported or inconsistent request."""


class SingularPointError(ElastoSchwarzError, ArithmeticError):
    """The wavenumber sits on a pole of the convergence factor."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class SingularTransmissionError(SingularPointError):
    """The transmission matrix B2 is numerically singular."""


class RootNotFoundError(ElastoSchwarzError, RuntimeError):
    """A bracketed root search failed to find a sign change."""


class PartitionError(ElastoSchwarzError, ValueError):
    """A decomposition does not cover the degrees of freedom it should."""


class FactorizationError(ElastoSchwarzError, RuntimeError):
    """A sparse LU factorization hit a numerically singular pivot."""

    def __init__(self, message, subdomain=None):
        super().__init__(message)
        self.subdomain = subdomain


class ConfigError(ElastoSchwarzError, ValueError):
    """An experiment configuration failed validation."""
