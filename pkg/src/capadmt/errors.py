"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain an operation is defined on."""


class ConvergenceError(RuntimeError):
    """A series, recursion or integral failed to reach its tolerance."""


class QuadratureError(ConvergenceError):
    """Adaptive quadrature could not meet the requested tolerance."""


class UnsupportedSpectrumError(ValueError):
    """Scattering spectrum kind that the analysis does not cover."""


class ConfigError(ValueError):
    """Invalid user configuration."""


class NumericalError(ArithmeticError):
    """Non-finite input or failed factorization in a linear-algebra step."""
