"""Model parameters, spatial grid, and meta-order descriptions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the reaction-diffusion latent book.

    The density phi(x, t) evolves under diffusion with coefficient ``D``,
    cancellation at rate ``nu`` and deposition of intensity ``lam`` toward
    the current price.  Two regimes are allowed:

    * finite memory: ``nu > 0`` and ``lam > 0``, with stationary shape
      ``phi_st(xi) = -(lam/nu) sign(xi) (1 - exp(-|xi|/xi_c))``;
    * infinite memory: ``nu == lam == 0`` with an explicit linear slope
      ``slope`` describing the locally linear book ``phi = -slope * x``.

    Derived quantities
    ------------------
    L : slope of the book at the price, ``lam / sqrt(nu D)`` or ``slope``
    J : steady transaction rate per unit price change, ``D * L``
    xi_c : book memory length ``sqrt(D / nu)`` (infinite in the limit)
    q_lin : volume scale ``J / nu`` separating linear from nonlinear impact
    """

    D: float
    nu: float
    lam: float
    slope: float = 0.0

    def __post_init__(self):
        if not self.D > 0.0:
            raise ValueError("D must be positive")
        if self.nu < 0.0 or self.lam < 0.0:
            raise ValueError("nu and lam must be nonnegative")
        finite = self.nu > 0.0 and self.lam > 0.0
        limit = self.nu == 0.0 and self.lam == 0.0 and self.slope > 0.0
        if not (finite or limit):
            raise ValueError(
                "need either nu > 0 and lam > 0, or the infinite-memory "
                "limit nu == lam == 0 with an explicit positive slope"
            )

    @classmethod
    def llob(cls, D: float, slope: float) -> "ModelParams":
        """Infinite-memory book with linear profile ``-slope * x``."""
        return cls(D=D, nu=0.0, lam=0.0, slope=slope)

    @property
    def infinite_memory(self) -> bool:
        return self.nu == 0.0

    @property
    def L(self) -> float:
        if self.infinite_memory:
            return self.slope
        return self.lam / np.sqrt(self.nu * self.D)

    @property
    def J(self) -> float:
        return self.D * self.L

    @property
    def xi_c(self) -> float:
        if self.infinite_memory:
            return np.inf
        return np.sqrt(self.D / self.nu)

    @property
    def q_lin(self) -> float:
        if self.infinite_memory:
            return np.inf
        return self.J / self.nu


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [x_min, x_max] with n_cells cells."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not self.x_min < 0.0 < self.x_max:
            raise ValueError("grid must bracket the initial price at x = 0")
        if self.n_cells < 8:
            raise ValueError("need at least 8 cells")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    def centers(self) -> np.ndarray:
        # Centered form keeps mirror pairs bit-exact on symmetric domains.
        mid = 0.5 * (self.x_min + self.x_max)
        n = self.n_cells
        return (np.arange(n) - 0.5 * (n - 1)) * self.dx + mid

    @classmethod
    def symmetric(cls, half_width: float, n_cells: int) -> "Grid":
        return cls(-half_width, half_width, n_cells)


@dataclass(frozen=True)
class MetaOrderSpec:
    """Trading schedule: signed rate m(t) over a finite horizon.

    ``rate`` is evaluated inside [0, horizon] and treated as zero outside.
    ``volume`` is the signed integral of the rate; buys are positive,
    sells are represented by a negated rate.
    """

    rate: Callable[[float], float]
    horizon: float
    volume: float

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")

    @classmethod
    def constant(cls, m0: float, horizon: float) -> "MetaOrderSpec":
        if m0 == 0.0:
            raise ValueError("rate must be nonzero")
        return cls(rate=lambda t: m0, horizon=horizon, volume=m0 * horizon)

    def rate_at(self, t: float) -> float:
        if t < 0.0 or t > self.horizon:
            return 0.0
        return float(self.rate(t))

    def negated(self) -> "MetaOrderSpec":
        base = self.rate
        return MetaOrderSpec(
            rate=lambda t: -base(t), horizon=self.horizon, volume=-self.volume
        )


def stationary_profile(x, params: ModelParams, price: float = 0.0):
    """Stationary book density around ``price``.

    Finite memory gives the saturating exponential shape; the infinite
    memory limit degenerates to the linear profile ``-L * (x - price)``.
    """
    xi = np.asarray(x, dtype=float) - price
    if params.infinite_memory:
        out = -params.slope * xi
    else:
        amp = params.lam / params.nu
        out = -amp * np.sign(xi) * (-np.expm1(-np.abs(xi) / params.xi_c))
    if np.isscalar(x):
        return float(out)
    return out


def green_value(x, t, params: ModelParams):
    """Free propagator of the density equation, exp(-nu t) G_D(x, t)."""
    if np.any(np.asarray(t) <= 0.0):
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    spread = 4.0 * params.D * t
    out = np.exp(-params.nu * t - x * x / spread) / np.sqrt(np.pi * spread)
    if out.ndim == 0:
        return float(out)
    return out
