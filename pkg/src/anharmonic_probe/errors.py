"""Exception and warning types shared across the package."""


class ProbeError(Exception):
    """Base class for all package errors."""


class ConfigError(ProbeError):
    """Invalid experiment configuration."""


class DimensionMismatch(ProbeError, ValueError):
    pass


class TruncationError(ProbeError):
    """Probability mass lost to the Fock truncation exceeds the threshold."""


class EigenFailure(ProbeError):
    pass


class NormError(ProbeError, ValueError):
    pass


class PerturbationError(ProbeError):
    """A first-order validity condition is violated (strict mode)."""


class PerturbationWarning(UserWarning):
    """A first-order validity condition is violated (non-strict mode)."""


class GridCoverageError(ProbeError):
    """An outcome grid does not hold enough probability mass."""


class ZeroInformation(ProbeError, ValueError):
    pass


class DimensionCap(ProbeError):
    """Joint Hilbert space larger than the configured cap."""


class CapabilityError(ProbeError):
    """Requested operation is infeasible at the given scale."""


class NonConvergence(ProbeError):
    pass


class BracketError(ProbeError):
    """The likelihood maximum sits on the search bracket boundary."""


# exit codes used by the command line runner
NUMERICAL_ERRORS = (PerturbationError, GridCoverageError, TruncationError,
                    EigenFailure, NormError, NonConvergence, BracketError,
                    ZeroInformation)
CAPABILITY_ERRORS = (CapabilityError, DimensionCap)
