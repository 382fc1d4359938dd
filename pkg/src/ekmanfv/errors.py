"""Exception hierarchy shared by all modules."""


class EkmanFvError(Exception):
    """Base class for all package-specific errors."""


class GridError(EkmanFvError, ValueError):
    """Invalid grid specification (unsorted levels, bad cell counts, ...)."""


class DimensionMismatchError(EkmanFvError, ValueError):
    """Array sizes inconsistent with the grid or with each other."""


class SingularSystemError(EkmanFvError, ArithmeticError):
    """Zero or near-zero pivot met while eliminating a linear system."""


class OutOfDomainError(EkmanFvError, ValueError):
    """Evaluation point outside the admissible interval."""


class UnsupportedConfigurationError(EkmanFvError, ValueError):
    """Physically or numerically unsupported parameter combination."""


class NumericsError(EkmanFvError, FloatingPointError):
    """Non-finite values produced during time integration."""


class ConfigError(EkmanFvError, ValueError):
    """Malformed configuration file or unknown configuration key."""
