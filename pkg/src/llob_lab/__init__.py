"""Numerical laboratory for latent-liquidity models of price impact."""

from .errors import (
    ConfigError,
    ConvergenceError,
    EmbeddingError,
    GridTooNarrowError,
    InfeasibleRegimeError,
    InstabilityError,
    InsufficientDataError,
    InversionAccuracyError,
    LLOBError,
    NonUniformGridError,
    NoRootError,
    RegimeGuardError,
    RegimeNotCoveredError,
    SingularSystemError,
)
from .params import Grid, MetaOrderSpec, ModelParams, green_value, stationary_profile
from .book import (
    BookState,
    Trajectory,
    book_from_profile,
    default_dt,
    find_price,
    simulate_metaorder,
    stationary_book,
    step,
)

__version__ = "0.1.0"
