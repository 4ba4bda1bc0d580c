"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class InstabilityError(NumericalError):
    """Raised when a closed loop (or Lyapunov operator) has spectral radius >= 1."""

    def __init__(self, message, rho=None):
        super().__init__(message)
        self.rho = rho


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line
