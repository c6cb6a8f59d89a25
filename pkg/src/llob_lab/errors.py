"""Exception types shared across the package."""


class LLOBError(Exception):
    """Base class for all model and solver errors."""


class GridTooNarrowError(LLOBError):
    """Domain is too small for the structures the run needs to hold."""


class InstabilityError(LLOBError):
    """Density grew beyond any physical scale; dt or dx is too coarse."""


class NoRootError(LLOBError):
    """The book has uniform sign, so no price can be defined."""


class ConvergenceError(LLOBError):
    """An iterative solve failed to reach its tolerance."""


class InfeasibleRegimeError(LLOBError):
    """The requested limit-regime combination cannot occur."""


class RegimeNotCoveredError(LLOBError):
    """No closed form is defined for this regime."""


class RegimeGuardError(LLOBError):
    """Parameters sit outside the guarded validity range of a formula."""


class SingularSystemError(LLOBError):
    """A linear relation degenerated; inputs are outside its validity."""


class InversionAccuracyError(LLOBError):
    """Independent inversion routes disagree beyond tolerance."""


class EmbeddingError(LLOBError):
    """Circulant embedding produced significantly negative eigenvalues."""


class NonUniformGridError(LLOBError):
    """Operation requires uniformly spaced sample times."""


class BranchDiscontinuityError(LLOBError):
    """The hard branch switch produced an unreasonably large velocity jump."""


class WindowTooShortError(LLOBError):
    """The requested fit window has too few usable lags."""


class InsufficientDataError(LLOBError):
    """Not enough samples or realizations for a reliable estimate."""


class ConfigError(LLOBError):
    """Bad experiment configuration: unknown key, bad value, or bad file."""
