"""Exception types shared across the package."""


class LTCacheError(Exception):
    pass


class InvalidParameterError(LTCacheError, ValueError):
    """A distribution or scenario parameter is outside its domain."""


class InvalidInputError(LTCacheError, ValueError):
    """Malformed decoder input (bad neighbor index, payload length mismatch)."""


class TruncatedCurveError(LTCacheError, RuntimeError):
    """A failure curve hit ``delta_cap`` before dropping below ``epsilon_tail``."""


class InstanceTooLargeError(LTCacheError, ValueError):
    """Exhaustive enumeration was requested on an instance that is too big."""


class BudgetError(LTCacheError, ValueError):
    """A placement does not spend the cache budget exactly."""


class RunawayTrialError(LTCacheError, RuntimeError):
    """A simulated request needed more backhaul symbols than the guard allows."""
