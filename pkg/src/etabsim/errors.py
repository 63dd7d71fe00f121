"""Exception types shared across the package."""


class EtabsimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EtabsimError):
    """Invalid system, gain, or simulation configuration.

    Carries an optional line number when raised by the CLI config parser.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(EtabsimError):
    """A smooth primitive was evaluated outside its domain.

    ``primitive`` names the offending operation (e.g. "sqrt", "division").
    """

    def __init__(self, primitive, message):
        super().__init__(f"{primitive}: {message}")
        self.primitive = primitive


class FactorizationError(EtabsimError):
    """A numerical factorization g(z) = M(z) z failed its residual check."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericBlowupError(EtabsimError):
    """A simulated signal became non-finite or exceeded the magnitude guard."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class TruthSignalError(EtabsimError):
    """A ground-truth signal violated its declared sign or magnitude bound."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class UsageError(EtabsimError):
    """An operation was called out of contract (e.g. time running backwards)."""
