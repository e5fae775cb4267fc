"""Exception hierarchy shared by all modules."""


class TvlobError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TvlobError, ValueError):
    """A time argument lies outside the trading horizon (or s > t)."""


class PreconditionError(TvlobError, ValueError):
    """Inputs violate an operation's stated preconditions."""


class ProfileError(TvlobError, ValueError):
    """A liquidity profile failed validation at construction.

    ``field`` names the offending configuration field when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UnsupportedProfileError(TvlobError, ValueError):
    """The profile lacks the smoothness an operation needs."""


class ConditionViolatedError(TvlobError, ValueError):
    """An analytic condition on (K, rho) fails; ``t`` is the first violating time."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ClosedFormUnavailableError(TvlobError, ValueError):
    """No closed-form solution applies; use the dynamic-programming solver."""


class InternalConsistencyError(TvlobError, RuntimeError):
    """A value function produced during backward induction broke an invariant."""


class ConfigError(TvlobError, ValueError):
    """Configuration file could not be parsed or validated."""
