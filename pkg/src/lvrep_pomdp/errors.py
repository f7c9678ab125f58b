"""Exception types raised across the package."""


class LvRepError(Exception):
    """Base class for all package errors."""


class ZeroProbabilityObservation(LvRepError):
    """An observation with (numerically) zero predicted probability was conditioned on."""


class BudgetExceeded(LvRepError):
    """A brute-force enumeration would exceed its node budget."""


class NotDecodable(LvRepError):
    """The POMDP is not empirically L-decodable at the requested depth."""


class EmptyDataset(LvRepError):
    """A fit was requested on a dataset with no records."""


class MissingEndAction(LvRepError):
    """An L-step rollout without a recorded end action was used for a bootstrapped target."""


class SingularSystem(LvRepError):
    """Unregularized least squares on a rank-deficient Gram matrix."""


class NotPositiveDefinite(LvRepError):
    """A covariance matrix failed its Cholesky factorization."""


class ConfigError(LvRepError):
    """A configuration file failed to parse or validate."""
