"""Exception hierarchy shared by all modules."""


class TradeGapError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TradeGapError, ValueError):
    """An argument lies outside the domain of the operation."""


class BracketError(DomainError):
    """A root-finding bracket does not contain a sign change."""


class QuadratureError(TradeGapError, ArithmeticError):
    """An integrand produced a non-finite value at a quadrature node."""


class ModelValidityError(TradeGapError, ValueError):
    """A market model violates one of the conditions the economy needs."""


class InternalConsistencyError(TradeGapError, RuntimeError):
    """A numerical self-check failed (e.g. a first-order condition residual)."""


class ConfigError(TradeGapError, ValueError):
    """A run configuration is missing, malformed or out of range."""
