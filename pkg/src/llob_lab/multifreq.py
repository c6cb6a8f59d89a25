"""Liquidity spread over a continuum of renewal frequencies.

A book made of many populations, each refreshing at its own rate nu
drawn from a gamma-type density, responds to order flow with two
distinct channels: modes slower than the elapsed time still remember
(a diffusive square-root kernel weighted by the surviving fraction
G(t)), while faster modes have saturated and act instantaneously
(weighted by H(t)).  The resulting propagator is non-convolutional in
time; its causal inverse is what turns correlated order flow back into
a diffusive price.  With frequency-dependent execution rates the same
machinery gives the meta-order impact crossover between the flow
autocorrelation regime and a generalized square-root regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular, toeplitz
from scipy.special import exp1, gamma as gamma_fn, gammainc, gammaincc

from .errors import (
    BranchDiscontinuityError,
    InsufficientDataError,
    NonUniformGridError,
    RegimeGuardError,
    SingularSystemError,
)
from .fitting import ExponentEstimate, ensemble_exponent
from .params import ModelParams

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class FrequencyDistribution:
    """Gamma-type density of renewal frequencies.

    rho(nu) = Z nu^(alpha_exp - 1) exp(-nu t_c) with Z chosen so the
    density integrates to one; t_c cuts off the fast end.  nu_lf is an
    optional hard low-frequency cutoff: it is needed only where a
    stationary state of the slowest modes is invoked, so it defaults
    to zero and the truncated mass (order (nu_lf t_c)^alpha) is not
    renormalized away.
    """

    alpha_exp: float
    t_c: float
    nu_lf: float = 0.0

    def __post_init__(self):
        if not self.alpha_exp > 0.0:
            raise ValueError("alpha_exp must be positive")
        if not self.t_c > 0.0:
            raise ValueError("t_c must be positive")
        if self.nu_lf < 0.0:
            raise ValueError("nu_lf must be nonnegative")

    @property
    def Z(self) -> float:
        return self.t_c**self.alpha_exp / gamma_fn(self.alpha_exp)

    def rho(self, nu):
        """Density values; zero below the low-frequency cutoff."""
        nu = np.asarray(nu, dtype=float)
        out = self.Z * nu**(self.alpha_exp - 1.0) * np.exp(-nu * self.t_c)
        if self.nu_lf > 0.0:
            out = np.where(nu < self.nu_lf, 0.0, out)
        return out

    def x_c(self, D: float) -> float:
        """Diffusion length over one cutoff time."""
        return math.sqrt(D * self.t_c)


def _upper_gamma(a: float, z):
    """Unnormalized upper incomplete gamma, any real non-integer a.

    Nonpositive a is lifted by the recursion
    Gamma(a, z) = (Gamma(a+1, z) - z^a e^-z) / a, which terminates in
    a <= 1 steps for the exponents used here; a == 0 is the
    exponential integral.
    """
    z = np.asarray(z, dtype=float)
    if a > 0.0:
        return gammaincc(a, z) * gamma_fn(a)
    if a == 0.0:
        return exp1(z)
    return (_upper_gamma(a + 1.0, z) - z**a * np.exp(-z)) / a


def memory_functions(t, dist: FrequencyDistribution):
    """Surviving-memory weight G and saturated weight H at time t.

    G(t) integrates the density over modes slower than 1/t; H(t)
    integrates rho(nu)/sqrt(nu t_c) over the faster modes.  Both reduce
    to incomplete-gamma closed forms; the alpha_exp = 1/2 case of H
    lands on the exponential integral and needs no special handling by
    the caller.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("t must be positive")
    a = dist.alpha_exp
    z = dist.t_c / t
    G = gammainc(a, z)
    H = _upper_gamma(a - 0.5, z) / gamma_fn(a)
    return G, H


def memory_functions_zeta(t, dist: FrequencyDistribution,
                          profile: "TradeRateProfile"):
    """Rate-weighted memory functions, exact and large-t asymptotic.

    Weighting each mode by its execution capacity (nu t_c)^zeta shifts
    the distribution exponent by zeta in both channels.  Returns
    (G_z, H_z, G_tail, H_tail); the tails are the power-law forms valid
    for t >> t_c and alpha_exp + zeta < 1/2, provided for comparison
    and exponent bookkeeping, not for computation.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("t must be positive")
    a, zt = dist.alpha_exp, profile.zeta
    ga = gamma_fn(a)
    z = dist.t_c / t
    Gz = gammainc(a + zt, z) * gamma_fn(a + zt) / ga
    Hz = _upper_gamma(a + zt - 0.5, z) / ga
    ratio = t / dist.t_c
    G_tail = ratio**(-(a + zt)) / (ga * (a + zt))
    if a + zt != 0.5:
        H_tail = ratio**(0.5 - a - zt) / (ga * (0.5 - a - zt))
    else:
        H_tail = np.log(ratio) / ga
    return Gz, Hz, G_tail, H_tail


@dataclass(frozen=True)
class TradeRateProfile:
    """Frequency-dependent execution capacity J_nu = J_hf (nu t_c)^zeta.

    zeta > 0 puts the bulk of executable flow at the fast end.
    """

    J_hf: float
    zeta: float

    def __post_init__(self):
        if not self.J_hf > 0.0:
            raise ValueError("J_hf must be positive")
        if not self.zeta > 0.0:
            raise ValueError("zeta must be positive")

    def rate_at(self, nu, dist: FrequencyDistribution):
        return self.J_hf * (np.asarray(nu, dtype=float) * dist.t_c)**self.zeta

    def total_rate(self, dist: FrequencyDistribution) -> float:
        """Density-weighted mean of J_nu."""
        a = dist.alpha_exp
        return self.J_hf * gamma_fn(self.zeta + a) / gamma_fn(a)

    def nu_star(self, m0: float, dist: FrequencyDistribution) -> float:
        """Frequency whose capacity matches the order rate m0."""
        if not m0 > 0.0:
            raise ValueError("m0 must be positive")
        return (m0 / self.J_hf)**(1.0 / self.zeta) / dist.t_c

    def upsilon(self, dist: FrequencyDistribution) -> float:
        """Elementary volume traded by the fast end over one t_c."""
        return self.J_hf * dist.t_c

    def switch_volume(self, m0: float, dist: FrequencyDistribution) -> float:
        """Volume beyond which the generalized square-root regime holds."""
        return (self.upsilon(dist)
                * (self.J_hf / m0)**((1.0 - self.zeta) / self.zeta))


def _cell_weights(n: int, delta: float) -> np.ndarray:
    """Integrals of 2/sqrt(pi s) over the lag cells [k delta, (k+1) delta]."""
    edges = np.sqrt(np.arange(n + 1, dtype=float) * delta)
    return (4.0 / _SQRT_PI) * np.diff(edges)


def _uniform_spacing(times: np.ndarray) -> float:
    d = np.diff(times)
    if times.size < 2 or np.any(d <= 0.0):
        raise NonUniformGridError("times must be strictly increasing")
    delta = float(times[1] - times[0])
    if np.max(np.abs(d - delta)) > 1e-9 * delta:
        raise NonUniformGridError("times must be uniformly spaced")
    if abs(times[0] - delta) > 1e-9 * delta:
        raise NonUniformGridError(
            "times must tile (0, t] in equal cells, so times[0] must "
            "equal the spacing"
        )
    return delta


@dataclass
class KernelMatrix:
    """Discrete propagator on a uniform time grid and its causal inverse.

    M maps a velocity history to the flow it absorbs; row i couples
    time t_i to every earlier cell, so M is lower triangular with a
    strictly positive diagonal.  K is filled in by invert_kernel.
    """

    times: np.ndarray
    M: np.ndarray
    delta: float
    K: np.ndarray | None = field(default=None)


def build_kernel(times, dist: FrequencyDistribution,
                 delta_term: bool = True) -> KernelMatrix:
    """Assemble the lower-triangular propagator matrix on a uniform grid.

    Entry (i, j < i) is G(t_i) times the exact integral of the
    square-root kernel over cell j at lag t_i - t_j; the diagonal adds
    the same-cell integral and, when delta_term is set, the saturated
    channel H(t_i) sqrt(t_c) acting within the step.
    """
    times = np.asarray(times, dtype=float)
    delta = _uniform_spacing(times)
    n = times.size
    if n > 8192:
        raise ValueError(
            "kernel matrix would be too large; use propagator_price, "
            "which never forms it"
        )
    G, H = memory_functions(times, dist)
    w = _cell_weights(n, delta)
    M = G[:, None] * toeplitz(w, np.zeros(n))
    if delta_term:
        M[np.diag_indices(n)] += H * math.sqrt(dist.t_c)
    return KernelMatrix(times=times, M=M, delta=delta)


def invert_kernel(km: KernelMatrix) -> KernelMatrix:
    """Populate K with the causal inverse by triangular solve."""
    d = np.diag(km.M)
    if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
        raise SingularSystemError(
            "propagator diagonal is not strictly positive; the kernel "
            "cannot be inverted causally"
        )
    km.K = solve_triangular(km.M, np.eye(km.M.shape[0]), lower=True)
    return km


def price_impulse_response(km: KernelMatrix) -> np.ndarray:
    """Price displacement at t_i per unit flow concentrated in cell j.

    K itself acts at the velocity level and its off-diagonal entries
    fall off like the three-halves power (it contains a half
    derivative); the observable response of the price is its running
    time integral, which decays with the half power in the lag and
    follows t^(alpha - 1/2) along the mid diagonal.
    """
    if km.K is None:
        raise SingularSystemError("invert_kernel must run first")
    return np.cumsum(km.K, axis=0) * km.delta


def _march_velocity(rhs, G, H_term, w):
    """Solve row by row for the velocity under the causal kernel.

    Row i reads G_i sum_k w_k v_(i-k) + H_term_i v_i = rhs_i; the
    history dot product runs over a reversed copy so each row touches
    one contiguous slice.
    """
    n = rhs.size
    v = np.zeros(n)
    rev = np.zeros(n)
    for i in range(n):
        acc = G[i] * float(w[1:i + 1] @ rev[n - i:n]) if i else 0.0
        v[i] = (rhs[i] - acc) / (G[i] * w[0] + H_term[i])
        rev[n - 1 - i] = v[i]
    return v


def _causal_sum(vals, u):
    """out_i = sum_(j<=i) u_(i-j) vals_j for lower-triangular weights."""
    n = vals.size
    out = np.empty(n)
    rev = np.zeros(n)
    for i in range(n):
        rev[n - 1 - i] = vals[i]
        out[i] = float(u[:i + 1] @ rev[n - 1 - i:n])
    return out


def propagator_price(flow, dist: FrequencyDistribution, params: ModelParams,
                     closed_form: bool = True, unsafe: bool = False):
    """Price response to an order-flow series through the full kernel.

    The primary route solves the causal system for the velocity and
    integrates it.  The secondary output is the late-time closed-form
    approximation (power-law-weighted diffusion kernel applied to the
    raw flow), returned for comparison; pass closed_form=False to skip
    it and get None in its place.
    """
    m = np.asarray(flow.samples, dtype=float)
    delta = float(flow.dt)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("flow must hold a nonempty 1d sample array")
    J = params.J
    if not unsafe and np.max(np.abs(m)) > 0.1 * J:
        raise RegimeGuardError(
            f"peak |m| = {np.max(np.abs(m)):.3g} exceeds J/10 = "
            f"{0.1 * J:.3g}; the linear propagator does not apply"
        )
    n = m.size
    times = np.arange(1, n + 1, dtype=float) * delta
    G, H = memory_functions(times, dist)
    w = _cell_weights(n, delta)
    rhs = m / (params.L * math.sqrt(params.D))
    v = _march_velocity(rhs, G, H * math.sqrt(dist.t_c), w)
    x = np.cumsum(v) * delta
    if not closed_form:
        return x, None
    a = dist.alpha_exp
    pref = a * gamma_fn(a) / (params.L * dist.t_c**a
                              * math.sqrt(params.D))
    u = np.diff(np.sqrt(np.arange(n + 1, dtype=float) * delta)) / _SQRT_PI
    x_cf = pref * _causal_sum(m * times**a, u)
    return x, x_cf


def diffusion_exponent(x, dt: float = 1.0, n_boot: int = 200,
                       seed: int = 0) -> ExponentEstimate:
    """Growth exponent of the ensemble mean square price.

    x is (realizations, samples).  The fit runs over the top two
    decades of lag time; the error bar comes from bootstrap resampling
    of realizations.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InsufficientDataError(
            "need a 2d ensemble (realizations, samples)"
        )
    n_real, n_t = x.shape
    if n_t < 2**14:
        raise InsufficientDataError(
            f"need at least 2^14 samples per series, got {n_t}"
        )
    if n_real < 8:
        raise InsufficientDataError(
            f"need at least 8 realizations, got {n_real}"
        )
    t = np.arange(1, n_t + 1, dtype=float) * dt
    window = (t[-1] / 100.0, t[-1])
    return ensemble_exponent(t, x**2, window=window, n_boot=n_boot,
                             seed=seed)


@dataclass
class MetaOrderPath:
    """Impact trajectory under heterogeneous trading rates."""

    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    t_switch: float
    switch_jump: float


def metaorder_multi(m0: float, profile: TradeRateProfile,
                    dist: FrequencyDistribution, t_grid, D: float = 1.0,
                    unsafe: bool = False, delta_term: bool = True,
                    switch_time: float | None = None,
                    jump_tol: float = 0.1) -> MetaOrderPath:
    """March the heterogeneous-rate impact equation through its two regimes.

    Before the crossover time (the inverse of the frequency whose
    capacity matches m0) the memory integral of the velocity carries
    the balance; past it the already-displaced price itself absorbs
    flow and the per-step balance becomes a quadratic in the velocity,
    solved on its positive root (a buy keeps the price moving up).
    The switch is hard; the relative velocity jump it causes is
    recorded on the result and must stay below jump_tol as a fraction
    of the accumulated price.
    """
    if not m0 > 0.0:
        raise ValueError("m0 must be positive")
    if not unsafe:
        if m0 > 0.1 * profile.J_hf:
            raise RegimeGuardError(
                f"m0 = {m0:.3g} above J_hf/10 = {0.1 * profile.J_hf:.3g}"
            )
        if dist.alpha_exp + profile.zeta >= 0.5:
            raise RegimeGuardError(
                "alpha_exp + zeta must stay below 1/2 for the "
                "saturated-channel split to hold"
            )
    t = np.asarray(t_grid, dtype=float)
    delta = _uniform_spacing(t)
    n = t.size
    t_sw = (1.0 / profile.nu_star(m0, dist) if switch_time is None
            else float(switch_time))
    Gz, Hz, _, _ = memory_functions_zeta(t, dist, profile)
    H_term = Hz * math.sqrt(dist.t_c) if delta_term else np.zeros(n)
    w = _cell_weights(n, delta)
    rhs = m0 * math.sqrt(D) / profile.J_hf
    sqD2 = 2.0 * math.sqrt(D)
    v = np.zeros(n)
    rev = np.zeros(n)
    x = np.zeros(n)
    x_prev = 0.0
    switch_jump = 0.0
    for i in range(n):
        if t[i] <= t_sw:
            acc = Gz[i] * float(w[1:i + 1] @ rev[n - i:n]) if i else 0.0
            v[i] = (rhs - acc) / (Gz[i] * w[0] + H_term[i])
        else:
            a_q = Gz[i] * delta / sqD2
            b_q = Gz[i] * x_prev / sqD2 + H_term[i]
            v[i] = (-b_q + math.sqrt(b_q * b_q + 4.0 * a_q * rhs)) \
                / (2.0 * a_q)
            if i and t[i - 1] <= t_sw:
                acc = Gz[i] * float(w[1:i + 1] @ rev[n - i:n])
                v_memory = (rhs - acc) / (Gz[i] * w[0] + H_term[i])
                switch_jump = abs(v[i] - v_memory) * delta
                if switch_jump > jump_tol * max(x_prev, 1e-300):
                    raise BranchDiscontinuityError(
                        f"velocity jump at the regime switch moves the "
                        f"price by {switch_jump:.3g} in one step against "
                        f"an accumulated {x_prev:.3g}; refine the grid "
                        f"near t = {t_sw:.3g}"
                    )
                switch_jump /= max(x_prev, 1e-300)
        rev[n - 1 - i] = v[i]
        x_prev += v[i] * delta
        x[i] = x_prev
    return MetaOrderPath(t=t, x=x, xdot=v, t_switch=t_sw,
                         switch_jump=switch_jump)
