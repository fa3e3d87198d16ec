"""Exception hierarchy shared by every waxkit module."""


class WaxError(Exception):
    """Base class for all waxkit errors."""


class DivisibilityError(WaxError, ValueError):
    pass


class RegimeError(WaxError, ValueError):
    """Dimensions violate M >= T >= K >= L >= 1."""


class DimError(WaxError, ValueError):
    pass


class StructureDomainError(WaxError, ValueError):
    """A combining structure was requested outside the dimensions it is defined for."""


class AlphaError(WaxError, ValueError):
    pass


class SingularThetaError(WaxError, ValueError):
    pass


class DegenerateError(WaxError, ValueError):
    pass


class RankError(WaxError):
    """A matrix that must be full-rank is not (at the active tolerance)."""


class InfeasibleError(WaxError):
    """The constraint system has no solution: no WAX decomposition for this instance."""

    def __init__(self, message, residual=None, group=None):
        super().__init__(message)
        self.residual = residual
        self.group = group


class IndeterminateError(WaxError):
    """Residual landed between the success and infeasibility thresholds."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularityError(WaxError):
    pass


class ProtocolViolation(WaxError):
    """A message log breaks the decentralized-training invariants."""
