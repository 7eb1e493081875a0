"""Exception hierarchy shared by all modules."""


class SRError(Exception):
    """Base class for every error raised by this package."""


class InvalidModelError(SRError, ValueError):
    """The Gaussian scenario is degenerate (e.g. putative mean of zero)."""


class InvalidInputError(SRError, ValueError):
    """An argument is outside the domain of the operation."""


class TruncatedRunError(SRError, RuntimeError):
    """A detection run ended without crossing the threshold.

    Attributes
    ----------
    state : SrState or CusumState
        Detector state at the moment the run was cut short.
    reason : str
        ``"cap"`` when the max-steps guard fired, ``"exhausted"`` when the
        observation source ran dry.
    """

    def __init__(self, message, state=None, reason="cap", trajectory=None):
        super().__init__(message)
        self.state = state
        self.reason = reason
        self.trajectory = trajectory


class NumericalFailureError(SRError, ArithmeticError):
    """A linear system was singular or too ill-conditioned to trust."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CalibrationError(SRError, RuntimeError):
    """Root-finding for a threshold failed to bracket or converge."""

    def __init__(self, message, iterates=()):
        super().__init__(message)
        self.iterates = list(iterates)
