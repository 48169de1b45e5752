"""Exception types shared across the toolkit."""


class DsmonError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(DsmonError, ValueError):
    """Matrix or signal dimensions are inconsistent."""


class RegularityError(DsmonError):
    """A matrix pencil that must be regular is (numerically) singular."""


class UnsupportedIndexError(DsmonError):
    """The pencil has differentiation index greater than one."""


class InconsistentStateError(DsmonError):
    """Initial condition violates the algebraic constraints."""


class DesignInfeasibleError(DsmonError):
    """No admissible injection gain was found (e.g. unobservable modes)."""


class GeometryError(DsmonError):
    """A subspace computation violated one of its certified identities."""


class BudgetExceededError(DsmonError):
    """A combinatorial enumeration would exceed the configured budget."""


class DeconvolutionError(DsmonError):
    """Input reconstruction did not reach the requested residual."""


class GridResolutionError(DsmonError):
    """Sampled-data differentiation needs a finer or longer grid."""


class ScenarioFormatError(DsmonError, ValueError):
    """A scenario or matrix file failed schema validation."""
