"""Exception hierarchy shared by all wealthlab modules."""


class WealthLabError(Exception):
    """Base class for every error raised by this package."""


class InvalidSizeError(WealthLabError, ValueError):
    pass


class InvalidPairError(WealthLabError, ValueError):
    pass


class EdgeListError(WealthLabError, ValueError):
    """Malformed edge-list input. ``lineno`` is 1-based, or None for whole-file problems."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DisconnectedNetworkError(WealthLabError, ValueError):
    pass


class CapacityError(WealthLabError, ValueError):
    """Problem size exceeds a documented hard cap."""


class DomainError(WealthLabError, ValueError):
    """Parameter outside the domain where a closed form exists (e.g. sigma >= 1)."""


class ConfigError(WealthLabError, ValueError):
    pass


class NumericalOverflowError(WealthLabError, ArithmeticError):
    pass


class NegativeWealthError(WealthLabError, ArithmeticError):
    """Raised under the ``abort`` policy when a wealth turns non-positive."""


class EmptyEnsembleError(WealthLabError, RuntimeError):
    pass


class InsufficientSamplesError(WealthLabError, ValueError):
    pass
