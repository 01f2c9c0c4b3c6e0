"""Exception types shared across the package."""


class AdregError(Exception):
    """Base class for all package errors."""


class InvalidInputError(AdregError):
    """Raised when an operation receives non-finite or ill-shaped data."""


class InvalidConfigError(AdregError):
    """Raised when a configuration violates its invariants."""


class IntegrationBlowupError(AdregError):
    """Raised when the integrator produces a non-finite state.

    Carries the hybrid time and the last finite state for diagnosis.
    """

    def __init__(self, t, j, state):
        self.t = t
        self.j = j
        self.state = state
        super().__init__(f"non-finite state at t={t:.6g}, j={j}")


class BranchPointError(AdregError):
    """Raised when a Lie derivative is requested at a non-smooth point."""
