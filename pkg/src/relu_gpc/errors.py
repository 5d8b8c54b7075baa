"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConstructionError(ValueError):
    """An object cannot be built from the given parameters."""


class RangeError(ArithmeticError):
    """A value overflows the floating-point range."""


class ConvergenceError(ArithmeticError):
    """A truncated series or iteration failed its convergence diagnostic."""


class BudgetError(RuntimeError):
    """A predicted resource requirement exceeds the configured budget."""


class NumericalGuardError(ArithmeticError):
    """A numerical safeguard tripped (ill-conditioning, ellipticity, ...)."""
