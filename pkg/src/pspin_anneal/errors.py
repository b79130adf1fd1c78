"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class InfeasibleError(RuntimeError):
    """The requested configuration does not exist (e.g. a missing well)."""


class NoTransitionError(InfeasibleError):
    """No phase transition is found in the searched parameter range."""
