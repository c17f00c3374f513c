"""Exception hierarchy shared by the solver, the simulator and the CLI."""


class FpsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FpsError, ValueError):
    """Invalid configuration key or value."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DimensionError(FpsError, ValueError):
    """System dimensions violate the RF-chain / antenna inequalities or BD needs."""


class DegenerateInputError(FpsError, ValueError):
    """An input that the operation cannot act on (zero channel, zero target)."""


class DegenerateTargetError(DegenerateInputError):
    """The projected target ``Re(F_opt F_DD^H C^H)`` vanishes identically."""


class BDInfeasibleError(DimensionError):
    """Null space of the other users' effective channels is too small."""


class NormalizationError(FpsError, ArithmeticError):
    """The analog-digital product has zero norm, so power cannot be normalized."""


class BudgetError(FpsError, ValueError):
    """Problem size exceeds the brute-force oracle's enumeration budget."""
