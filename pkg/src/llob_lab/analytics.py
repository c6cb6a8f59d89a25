"""Closed-form impact laws and the relaxation integral equation.

Execution regimes are labelled by three ratios: participation m0/J,
duration nu*T, and volume Q/Q_lin.  Six of the eight corner combinations
are realizable; each carries a leading-order price trajectory, and the
fast small-volume ones a first-order memory correction as well.  After
execution the normalized displacement F(u), u = nu * (time since
completion), obeys a weakly singular Volterra equation solved here by
product integration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ConvergenceError, InfeasibleRegimeError, RegimeNotCoveredError
from .params import ModelParams

_PARTICIPATION = ("small", "large", "intermediate")
_DURATION = ("fast", "slow", "intermediate")
_VOLUME = ("small", "large", "intermediate")

# sqrt(4/pi) - sqrt(pi/4), slope of the reduced first-order correction
# in the small-participation fast regime.
K_SMALL = float(np.sqrt(4.0 / np.pi) - np.sqrt(np.pi / 4.0))


@dataclass(frozen=True)
class Regime:
    """Corner labels for participation, duration, and volume.

    A tag is "intermediate" when the corresponding ratio falls between
    the configured thresholds.  Two definite corners are contradictory
    (a fast small-rate order cannot move a large volume, a slow
    large-rate order cannot move a small one) and are rejected.
    """

    participation: str
    duration: str
    volume: str

    def __post_init__(self):
        if self.participation not in _PARTICIPATION:
            raise ValueError(f"bad participation tag {self.participation!r}")
        if self.duration not in _DURATION:
            raise ValueError(f"bad duration tag {self.duration!r}")
        if self.volume not in _VOLUME:
            raise ValueError(f"bad volume tag {self.volume!r}")
        combo = (self.participation, self.duration, self.volume)
        if combo == ("small", "fast", "large") or combo == ("large", "slow", "small"):
            raise InfeasibleRegimeError(
                f"regime {combo} is not realizable: the volume ratio is the "
                "product of the other two"
            )

    @property
    def definite(self) -> bool:
        return "intermediate" not in (self.participation, self.duration, self.volume)


def _tag(ratio: float, band) -> str:
    lo, hi = band
    if ratio < lo:
        return "small"
    if ratio > hi:
        return "large"
    return "intermediate"


def classify_regime(m0: float, T: float, params: ModelParams,
                    participation_band=(0.2, 5.0),
                    duration_band=(0.1, 10.0),
                    volume_band=(0.1, 10.0)) -> Regime:
    """Label an execution by its three regime ratios.

    Total function: every positive (m0, T) yields a Regime, possibly
    with "intermediate" tags.  The volume ratio Q/Q_lin equals the
    product of the other two, so contradictory corners never arise.
    """
    if m0 <= 0.0 or T <= 0.0:
        raise ValueError("m0 and T must be positive")
    part = _tag(m0 / params.J, participation_band)
    nuT = params.nu * T
    dur = "fast" if nuT < duration_band[0] else (
        "slow" if nuT > duration_band[1] else "intermediate")
    vol_ratio = (m0 / params.J) * nuT
    vol = _tag(vol_ratio, volume_band)
    dur_tag = {"small": "fast", "large": "slow"}.get(dur, dur)
    return Regime(part, dur_tag, vol)


@dataclass(frozen=True)
class TrajectoryCoeffs:
    """Pieces of the expansion x_t = alpha (z0_t + sqrt(nu) z1_t).

    alpha carries the dimensions; z0 and z1 are callables of time.  z1
    is None where no correction is defined, and beta is the amplitude
    of the post-execution relaxation profile.
    """

    alpha: float
    beta: float
    z0: object
    z1: object = None


def trajectory_coeffs(m0: float, params: ModelParams,
                      regime: Regime) -> TrajectoryCoeffs:
    if not regime.definite:
        raise RegimeNotCoveredError(
            "no closed form between regimes; refine parameters or thresholds"
        )
    p = params
    if regime.duration == "slow" or regime.volume == "large":
        if p.infinite_memory:
            raise RegimeNotCoveredError(
                "the linear-in-time regime requires finite memory (nu > 0)"
            )
        slope = m0 * p.nu / p.lam
        return TrajectoryCoeffs(alpha=slope, beta=np.nan, z0=lambda t: t)
    if regime.participation == "small":
        alpha = m0 / (p.L * np.sqrt(np.pi * p.D))
        return TrajectoryCoeffs(
            alpha=alpha, beta=0.5,
            z0=np.sqrt, z1=lambda t: -K_SMALL * t,
        )
    alpha = np.sqrt(2.0 * m0 / p.L)
    return TrajectoryCoeffs(
        alpha=alpha, beta=regime_beta(m0, p, "large"),
        z0=np.sqrt, z1=lambda t: -(t / 3.0) * np.sqrt(p.J / (2.0 * m0)),
    )


def analytic_price(t, m0: float, params: ModelParams, regime: Regime):
    """Leading-order price trajectory for a constant-rate buy order."""
    c = trajectory_coeffs(m0, params, regime)
    return c.alpha * c.z0(np.asarray(t, dtype=float))


def first_order_correction(t, m0: float, params: ModelParams, regime: Regime):
    """Finite-memory correction alpha sqrt(nu) z1_t, nonpositive for t >= 0.

    Defined only in the fast small-volume corners; the linear regime is
    already exact at this order.
    """
    if regime.duration != "fast" or regime.volume != "small":
        raise RegimeNotCoveredError(
            "the sqrt(nu) correction applies to fast, small-volume executions"
        )
    c = trajectory_coeffs(m0, params, regime)
    return c.alpha * np.sqrt(params.nu) * c.z1(np.asarray(t, dtype=float))


def decay_profile(u_grid, beta: float) -> np.ndarray:
    """Relaxation profile F on u_grid by causal product integration.

    The self-consistency condition for the price after execution stops,
    written for Y(u) = F(u) + (beta / sqrt(u)) (1 - e^{-u}), reads

        Y(u) = beta sqrt(pi) e^{-u}
               + (1 / sqrt(pi)) * integral over (0, u) of
                 Y(v) e^{v-u} / sqrt(u - v) dv.

    Y is smooth with Y(0) = beta sqrt(pi), so marching it instead of F
    keeps the scheme second order.  The integrable kernel singularity is
    handled by integrating e^{v-u}/sqrt(u-v) exactly over cells against
    the cell-averaged Y, which makes each step a scalar solve.  The
    plateau is F(inf) = 2 beta sqrt(pi): the memory integral doubles the
    weight of the bare drive as its kernel mass saturates.
    """
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("u_grid must be a nonempty 1d sequence")
    if u[0] <= 0.0 or np.any(np.diff(u) <= 0.0):
        raise ValueError("u_grid must be increasing and start above zero")
    if beta == 0.0:
        return np.zeros_like(u)
    rpi = np.sqrt(np.pi)
    nodes = np.concatenate([[0.0], u])
    Y = np.empty(u.size + 1)
    Y[0] = beta * rpi
    for i in range(1, u.size + 1):
        e = rpi * erf(np.sqrt(u[i - 1] - nodes[:i + 1]))
        w = (e[:-1] - e[1:]) / rpi
        mid = 0.5 * (Y[:i] + Y[1:i + 1])
        rhs = beta * rpi * np.exp(-u[i - 1]) + w[:-1] @ mid[:-1] \
            + 0.5 * w[-1] * Y[i - 1]
        coef = 1.0 - 0.5 * w[-1]
        Y[i] = rhs / coef
        if abs(coef * Y[i] - rhs) > 1e-10 * max(1.0, abs(rhs)):
            raise ConvergenceError(
                f"relaxation solve lost accuracy at u = {u[i - 1]:g}"
            )
    return Y[1:] + beta * np.expm1(-u) / np.sqrt(u)


def decay_asymptote(u, beta: float):
    """Large-u form 2 beta sqrt(pi) - (beta / sqrt(u)) (1 - e^{-u})."""
    u = np.asarray(u, dtype=float)
    return 2.0 * beta * np.sqrt(np.pi) + beta * np.expm1(-u) / np.sqrt(u)


def permanent_impact(Q: float, params: ModelParams) -> float:
    """Plateau displacement xi_c * Q / Q_lin, equal to nu Q / lambda.

    This is the level the relaxation dynamics actually select: the
    final-value limit of the linear-response solution, confirmed by
    direct simulation at strong drive.  It is linear in Q and vanishes
    in the memoryless limit.
    """
    if Q < 0.0:
        raise ValueError("Q must be nonnegative")
    return Q * np.sqrt(params.D * params.nu) / params.J


def regime_beta(m0: float, params: ModelParams, participation: str) -> float:
    """Relaxation amplitude matching the plateau for either participation.

    Both values follow from requiring alpha sqrt(nu) T F(inf), with
    F(inf) = 2 beta sqrt(pi), to equal the permanent plateau.
    """
    if participation == "small":
        return 0.5
    if participation == "large":
        return 0.5 * np.sqrt(m0 / (2.0 * np.pi * params.J))
    raise ValueError("participation must be 'small' or 'large'")
