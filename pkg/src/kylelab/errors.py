"""Exception types shared across the package."""


class KyleLabError(Exception):
    """Base class for all package errors."""


class EmptyQuoteSet(KyleLabError):
    """An operation that needs at least one quote received none."""


class ZeroLambda(KyleLabError):
    """A quote carries a zero (or effectively infinite-depth) impact coefficient."""


class InvalidConfig(KyleLabError):
    """A configuration object violates its invariants."""


class EpisodeFinished(KyleLabError):
    """step() was called after the episode's final trading period."""


class ActionOutOfDomain(KyleLabError):
    """An agent action is non-finite or otherwise outside its domain."""


class InvalidInput(KyleLabError):
    """A solver received inputs outside its precondition."""


class NoConvergence(KyleLabError):
    """The equilibrium solver failed to meet its tolerance.

    Carries the iteration count and the best residual reached so callers
    can report diagnostics.
    """

    def __init__(self, iterations: int, best_residual: float, message: str = ""):
        self.iterations = iterations
        self.best_residual = best_residual
        super().__init__(
            message
            or f"no convergence after {iterations} iterations "
            f"(best residual {best_residual:.3e})"
        )


class LengthMismatch(KyleLabError):
    """Sequence arguments have inconsistent lengths."""


class NonPositiveMu(KyleLabError):
    """The acquisition recursion produced mu <= 0; the optimum is not valid."""

    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"mu^({step}) = {value:.6g} <= 0 violates the positivity condition")


class DimensionMismatch(KyleLabError):
    """Observation or action dimensions do not match the network."""


class IncompleteEpisode(KyleLabError):
    """Rollout buffer contains a truncated episode."""


class NonFiniteLoss(KyleLabError):
    """A training loss evaluated to NaN or infinity."""


class VersionMismatch(KyleLabError):
    """A checkpoint file is missing, corrupt, or from an incompatible version."""


class InsufficientData(KyleLabError):
    """Too few (or degenerate) observations for a statistical procedure."""


class DegenerateRegressor(KyleLabError):
    """The regressor has no variation; the slope is unidentified."""


class DegenerateVariance(KyleLabError):
    """Sample variance is zero; standardized moments are undefined."""


class ZeroTotalVolume(KyleLabError):
    """Reference traces carry no traded volume to build a volume curve from."""
