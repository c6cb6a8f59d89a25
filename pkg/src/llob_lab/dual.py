"""Two-population latent book: slow and fast liquidity sharing one price.

A slow book (small nu, small lambda) and a fast book (large nu, large
lambda) with a common diffusivity react to the same transaction price.
An aggressive meta-order is first absorbed by the fast population; the
absorbed share shifts to the slow population on the timescale t_star,
which moves the impact trajectory from linear in time to square root.
A second, much smaller timescale family (t_dagger) governs the very
small participation regime, where the slow share follows a Laplace
transform with a square-root branch point.

Closed forms here are linear-response results; the reference truth for
midrange times is TwoBookSimulator, which steps both books in the
co-moving frame of the price and enforces the shared zero crossing at
every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erfcx

from scipy.linalg import solve_banded

from . import laplace
from .errors import (
    ConvergenceError,
    InfeasibleRegimeError,
    InstabilityError,
    RegimeGuardError,
    SingularSystemError,
)
from .params import ModelParams, stationary_profile

_GUARD_MARGIN = 10.0


@dataclass(frozen=True)
class DualParams:
    """Parameter bundle for the slow/fast pair and the meta-order rate."""

    slow: ModelParams
    fast: ModelParams
    m0: float

    def __post_init__(self):
        if self.slow.D != self.fast.D:
            raise ValueError("both books must share one diffusivity")
        if self.m0 <= 0.0:
            raise ValueError("m0 must be positive")
        if not (self.fast.L >= _GUARD_MARGIN * self.slow.L):
            raise InfeasibleRegimeError(
                "scale separation requires L_fast / L_slow >= 10, got "
                f"{self.fast.L / self.slow.L:.3g}"
            )

    @property
    def D(self) -> float:
        return self.slow.D

    @property
    def J(self) -> float:
        """Total current capacity of the pair."""
        return self.slow.J + self.fast.J

    @property
    def t_star(self) -> float:
        """Crossover time at which the slow book takes over the flow."""
        return self.fast.J**2 / (2.0 * self.fast.nu * self.slow.J * self.m0)

    @property
    def t_dagger(self) -> float:
        """Relaxation time of the slow share at very small participation."""
        return (self.m0 / (math.pi * self.slow.J)) * self.t_star

    def check_horizon(self, T: float, unsafe: bool = False) -> None:
        """Require nu_s T small and nu_f T large, both with 10x margins."""
        if unsafe:
            return
        if self.slow.nu * T > 1.0 / _GUARD_MARGIN:
            raise RegimeGuardError(
                f"horizon too long for the slow book: nu_s T = "
                f"{self.slow.nu * T:.3g} > 0.1"
            )
        if self.fast.nu * T < _GUARD_MARGIN:
            raise RegimeGuardError(
                f"horizon too short for the fast book: nu_f T = "
                f"{self.fast.nu * T:.3g} < 10"
            )

    def check_participation(self, unsafe: bool = False) -> None:
        """Require J_s << m0 << J_f, both with 10x margins."""
        if unsafe:
            return
        if self.m0 < _GUARD_MARGIN * self.slow.J:
            raise RegimeGuardError(
                f"m0 = {self.m0:.3g} below 10 J_s = {10 * self.slow.J:.3g}"
            )
        if self.m0 > self.fast.J / _GUARD_MARGIN:
            raise RegimeGuardError(
                f"m0 = {self.m0:.3g} above 0.1 J_f = {0.1 * self.fast.J:.3g}"
            )


def split_rates(t, dual: DualParams, unsafe: bool = False):
    """Flow absorbed by each population at time t into the execution.

    The fast book takes everything at the start and relinquishes the
    flow as 1/sqrt(1 + t/t_star); the slow book picks up the remainder,
    so the two always sum to m0 exactly.
    """
    dual.check_participation(unsafe)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be nonnegative")
    m_f = dual.m0 / np.sqrt(1.0 + t / dual.t_star)
    return dual.m0 - m_f, m_f


def price_trajectory(t, dual: DualParams, unsafe: bool = False):
    """Impact during execution: linear below t_star, square root above."""
    dual.check_participation(unsafe)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be nonnegative")
    amp = dual.fast.lam / (dual.slow.L * dual.fast.nu)
    return amp * (np.sqrt(1.0 + t / dual.t_star) - 1.0)


def sqrt_regime_threshold(nu_f: float, T_d: float, J: float,
                          J_s: float) -> float:
    """Volume fraction above which a metaorder sees square-root impact.

    Orders smaller than this fraction of the period volume never push
    past the fast book's linear response within the horizon T_d.
    """
    if min(nu_f, T_d, J, J_s) <= 0.0:
        raise ValueError("all threshold inputs must be positive")
    return (1.0 / (nu_f * T_d)) * (J / J_s)


def executed_slow_volume(T: float, dual: DualParams) -> float:
    """Time integral of the slow share over an execution of length T.

    Equals m0 * f(T) with f(T) = T - 2 t_star (sqrt(1 + T/t_star) - 1),
    which interpolates the limits f -> T for T >> t_star and
    f -> T^2/(4 t_star) for T << t_star.
    """
    ts = dual.t_star
    return dual.m0 * (T - 2.0 * ts * (math.sqrt(1.0 + T / ts) - 1.0))


def decay_amplitude(T: float, dual: DualParams,
                    unsafe: bool = False) -> float:
    """Coefficient B of the late-time decay x(t) = B / sqrt(t).

    B solves the linear pair coupling the slow book's diffusive release
    of the stored volume to the fast book's mean-reverting counterflow:

        L_s B = Q_s / sqrt(4 pi D) + C / sqrt(pi D T),
        C = lambda_f B / (2 nu_f),

    with Q_s the slow volume executed_slow_volume(T, dual).  The pair
    becomes singular when the fast counterflow feedback reaches unity;
    past that point the asymptotic form is invalid and this raises.
    """
    dual.check_participation(unsafe)
    if T <= 0.0:
        raise ValueError("T must be positive")
    feedback = dual.fast.lam / (
        2.0 * dual.fast.nu * dual.slow.L * math.sqrt(math.pi * dual.D * T)
    )
    if feedback >= 1.0:
        raise SingularSystemError(
            f"fast-book feedback {feedback:.3g} >= 1: decay form invalid"
        )
    q_s = executed_slow_volume(T, dual)
    return q_s / (math.sqrt(4.0 * math.pi * dual.D) * dual.slow.L
                  * (1.0 - feedback))


def decay_trajectory(t, T: float, dual: DualParams,
                     unsafe: bool = False):
    """Post-execution price B/sqrt(t); no permanent component survives."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= T):
        raise ValueError("decay form only applies for t > T")
    return decay_amplitude(T, dual, unsafe) / np.sqrt(t)


def _slow_rate_transform(dual: DualParams):
    m0, td = dual.m0, dual.t_dagger

    def fhat(p):
        return (m0 / p) / (1.0 + np.sqrt(p * td))

    return fhat


def linear_regime_slow_rate(t, dual: DualParams,
                            unsafe: bool = False):
    """Slow share of a very small metaorder, by Laplace inversion.

    Valid when m0 is far below both books' capacities; then the slow
    share obeys m_hat(p) = (m0/p)/(1 + sqrt(p t_dagger)), rising from
    zero as sqrt(t) and saturating at m0 as 1 - sqrt(t_dagger/(pi t)).
    Both inversion routes must agree or the call raises.
    """
    if not unsafe and dual.m0 > 0.1 * min(dual.slow.J, dual.fast.J):
        raise RegimeGuardError(
            "linear regime needs m0 <= 0.1 min(J_s, J_f), got m0 = "
            f"{dual.m0:.3g}"
        )
    return laplace.invert(_slow_rate_transform(dual), t)


def linear_regime_price(t, dual: DualParams, unsafe: bool = False):
    """Price of a very small metaorder, t <= horizon, closed form.

    Integrates the fast share of the flow against the fast book's
    restoring rate.  Early the price grows as (nu_f/lambda_f) m0 t;
    late it grows as sqrt(t) while the slow share saturates.
    """
    if not unsafe and dual.m0 > 0.1 * min(dual.slow.J, dual.fast.J):
        raise RegimeGuardError(
            "linear regime needs m0 <= 0.1 min(J_s, J_f), got m0 = "
            f"{dual.m0:.3g}"
        )
    z = np.asarray(t, dtype=float) / dual.t_dagger
    if np.any(z < 0.0):
        raise ValueError("t must be nonnegative")
    amp = (dual.fast.nu / dual.fast.lam) * dual.m0 * dual.t_dagger
    return amp * (erfcx(np.sqrt(z)) - 1.0 + 2.0 * np.sqrt(z / np.pi))


def slow_rate_by_convolution(t_grid, dual: DualParams) -> np.ndarray:
    """Independent check of the slow share: solve its balance equation.

    The slow share at t equals the diffusive release of everything the
    fast book has refused so far,

        m_s(t) = (1/sqrt(t_dagger)) * integral over (0, t) of
                 (m0 - m_s(tau)) / sqrt(pi (t - tau)) dtau,

    solved by product integration: the 1/sqrt kernel is integrated
    exactly over cells against cell-averaged values, giving one scalar
    solve per node.  Shares no code with the Laplace route.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("t_grid must be a nonempty 1d sequence")
    if t[0] <= 0.0 or np.any(np.diff(t) <= 0.0):
        raise ValueError("t_grid must be increasing and start above zero")
    pref = 1.0 / math.sqrt(math.pi * dual.t_dagger)
    nodes = np.concatenate([[0.0], t])
    m = np.empty(t.size + 1)
    m[0] = 0.0
    for i in range(1, t.size + 1):
        # w_j = integral of 1/sqrt(t_i - tau) over cell j
        root = np.sqrt(t[i - 1] - nodes[:i + 1])
        w = 2.0 * (root[:-1] - root[1:])
        mid = 0.5 * (m[:i] + m[1:i + 1])
        rhs = pref * (
            dual.m0 * w.sum()
            - w[:-1] @ mid[:-1]
            - 0.5 * w[-1] * m[i - 1]
        )
        m[i] = rhs / (1.0 + 0.5 * pref * w[-1])
    return m[1:]


@dataclass
class DualTrajectory:
    """Time series of the shared price and the per-book absorbed rates."""

    t: np.ndarray
    m_s: np.ndarray
    m_f: np.ndarray
    x: np.ndarray

    def write_csv(self, path, stride: int = 1) -> None:
        rows = np.column_stack(
            [self.t[::stride], self.m_s[::stride],
             self.m_f[::stride], self.x[::stride]]
        )
        np.savetxt(path, rows, fmt="%.12e", delimiter=",",
                   header="t,m_s,m_f,x", comments="")


class TwoBookSimulator:
    """Reference dynamics: both books stepped against one shared price.

    The fields live in the frame of the price, y = x - X(t).  The price
    sits on one grid node for the whole run, so the sign flip of the
    deposition and the meta-order injection never straddle a cell.  A
    stepper that keeps the grid fixed and moves the readout zero instead
    has a finite drive floor: once the flow drops below about one cell's
    worth of deposition per relaxation time the zero locks into a
    period-two hop between neighbouring nodes and the price stops dead.
    The interesting regimes of the pair (weak drive on the fast scale,
    decay with no drive at all) sit under that floor at any affordable
    resolution, which is why the frame moves and the grid does not.

    Each step has two unknowns, the frame velocity v and the fast
    book's share u of the injected flow; the two residuals are the
    post-step densities of the books on the price node.  Both must
    vanish: that is the shared-price condition.  A 2x2 Newton iteration
    with a finite difference Jacobian, reused across steps, settles it
    in two or three field evaluations per step.  With zero total flow
    the same system lets the books trade against each other (u < 0
    while the slow deficit refills), which is what makes the impact
    decay instead of freezing.

    The price path is X(t) = integral of v, so it is exact to the same
    order as the advection term; there is no sub-cell interpolation
    anywhere in the loop.
    """

    _MAX_ITERS = 12

    def __init__(self, dual: DualParams, dt: float, drive_time: float,
                 settle_time: float = 0.0, n_res: int = 8,
                 lead: float | None = None, unsafe: bool = False):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if drive_time <= 0.0:
            raise ValueError("drive_time must be positive")
        if settle_time < 0.0:
            raise ValueError("settle_time must be nonnegative")
        if dual.fast.nu * dt > 0.2:
            raise InstabilityError(
                f"nu_f dt = {dual.fast.nu * dt:.3g} too coarse for the "
                "fast book; refine dt below 0.2/nu_f"
            )
        dual.check_horizon(drive_time, unsafe=unsafe)
        self.dual = dual
        self.dt = dt
        self.unsafe = unsafe
        D = dual.D
        xi_f = dual.fast.xi_c
        self.dx = dx = xi_f / n_res
        self._horizon = drive_time + settle_time
        sigma = math.sqrt(2.0 * D * (drive_time + settle_time))
        if settle_time > 0.0:
            # The slow deficit stays where the drive carved it, so once
            # the price retraces the grid must keep covering the whole
            # excursion plus its diffusive spread on both sides; a lee
            # wall that clips the deficit refills it for free and turns
            # the decay tail into a cliff.
            span = 1.15 * price_trajectory(drive_time, dual, unsafe=True)
            trail = span + 1.6 * sigma + 10.0 * xi_f
            lead_default = trail
        else:
            trail = 2.0 * sigma + 10.0 * xi_f
            # Saturating the slow book at the leading wall acts as a
            # liquidity refill; 100 fast lengths of headroom keeps that
            # bias below resolution (checked against 150).
            lead_default = 100.0 * xi_f
        self.lead = lead_default if lead is None else float(lead)
        self.trail = trail
        n = int(math.ceil((trail + self.lead) / dx)) + 1
        j0 = int(round(trail / dx))
        self.n_cells = n
        self._j0 = j0
        y = (np.arange(n) - j0) * dx
        self._y = y
        sgn = -np.sign(y)
        sgn[j0] = 0.0
        self._src_f = dual.fast.lam * sgn
        self._src_s = dual.slow.lam * sgn
        self._delta = np.zeros(n)
        self._delta[j0] = 1.0 / dx
        self._set_dt(dt)
        self.phi_f = stationary_profile(y, dual.fast)
        self.phi_s = stationary_profile(y, dual.slow)
        self._bc_f = (dual.fast.lam / dual.fast.nu,
                      -dual.fast.lam / dual.fast.nu)
        self._X = 0.0
        self._t = 0.0
        self._v = 0.0
        self._u = 0.0
        self._jac = None
        self._m_scale = dual.m0
        self._v_scale = dual.fast.nu * dual.m0 / dual.fast.lam
        self._tol_f = 1e-9 * dual.fast.lam / dual.fast.nu
        self._tol_s = 1e-9 * dual.slow.L * (trail + self.lead)
        self._blow = 1e6 * dual.fast.lam / dual.fast.nu
        self.evals = 0

    def _set_dt(self, dt: float) -> None:
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.dual.fast.nu * dt > 0.2:
            raise InstabilityError(
                f"nu_f dt = {self.dual.fast.nu * dt:.3g} too coarse for "
                "the fast book; refine dt below 0.2/nu_f"
            )
        self.dt = dt
        r = self.dual.D * dt / self.dx**2
        n = self.n_cells
        ab = np.zeros((3, n))
        ab[0, 1:] = -0.5 * r
        ab[1, :] = 1.0 + r
        ab[2, :-1] = -0.5 * r
        ab[1, 0] = ab[1, -1] = 1.0
        ab[0, 1] = 0.0
        ab[2, -2] = 0.0
        self._ab = ab
        self._r = r
        self._dec_f = math.exp(-self.dual.fast.nu * dt)
        self._dec_s = math.exp(-self.dual.slow.nu * dt)
        self._jac = None

    @property
    def price(self) -> float:
        return self._X

    @property
    def t(self) -> float:
        return self._t

    @property
    def velocity(self) -> float:
        """Frame velocity from the last accepted step."""
        return self._v

    @property
    def split(self) -> float:
        """Fast book's share of the total flow in the last step."""
        return self._u

    def _bc_s(self, X: float):
        p = self.dual.slow
        xl, xr = X + self._y[0], X + self._y[-1]
        lo = -(p.lam / p.nu) * math.copysign(
            1.0 - math.exp(-abs(xl) / p.xi_c), xl)
        hi = -(p.lam / p.nu) * math.copysign(
            1.0 - math.exp(-abs(xr) / p.xi_c), xr)
        return lo, hi

    def _adv_rhs(self, w: np.ndarray, v: float) -> np.ndarray:
        r, dt, dx = self._r, self.dt, self.dx
        rhs = np.empty_like(w)
        rhs[1:-1] = (w[1:-1] + 0.5 * r * (w[:-2] - 2.0 * w[1:-1] + w[2:])
                     + dt * v * (w[2:] - w[:-2]) / (2.0 * dx))
        rhs[0] = w[0]
        rhs[-1] = w[-1]
        return rhs

    def _trial(self, v: float, u: float, m_total: float):
        """One candidate step; returns both fields and their node values."""
        hs = 0.5 * self.dt
        sf = self._src_f + u * self._delta
        ss = self._src_s + (m_total - u) * self._delta
        wf = (self.phi_f + hs * sf) * self._dec_f
        ws = (self.phi_s + hs * ss) * self._dec_s
        nf = solve_banded((1, 1), self._ab, self._adv_rhs(wf, v)) + hs * sf
        ns = solve_banded((1, 1), self._ab, self._adv_rhs(ws, v)) + hs * ss
        nf[0], nf[-1] = self._bc_f
        ns[0], ns[-1] = self._bc_s(self._X + v * self.dt)
        self.evals += 1
        j0 = self._j0
        return nf, ns, nf[j0], ns[j0]

    def step(self, m_total: float, dt: float | None = None) -> float:
        """Advance both books one dt; returns the shared price.

        Passing dt switches the step size from here on (the cached
        operator is rebuilt once), which lets a run resolve a fast
        early transient and then stride through a long quiet tail.
        """
        if dt is not None and dt != self.dt:
            self._set_dt(dt)
        dx, dt = self.dx, self.dt
        v, u = self._v, self._u
        dv_cap = 0.2 * dx / dt
        u_cap = max(self._m_scale, 10.0 * self.dual.slow.J)
        nf, ns, rf, rs = self._trial(v, u, m_total)
        for it in range(self._MAX_ITERS):
            if abs(rf) <= self._tol_f and abs(rs) <= self._tol_s:
                break
            if self._jac is None or it >= 2:
                dv = 1e-6 * max(abs(v), self._v_scale)
                du = 1e-6 * max(abs(u), self._m_scale)
                _, _, rf_v, rs_v = self._trial(v + dv, u, m_total)
                _, _, rf_u, rs_u = self._trial(v, u + du, m_total)
                self._jac = np.array(
                    [[(rf_v - rf) / dv, (rf_u - rf) / du],
                     [(rs_v - rs) / dv, (rs_u - rs) / du]])
            try:
                upd = np.linalg.solve(self._jac, [-rf, -rs])
            except np.linalg.LinAlgError:
                raise SingularSystemError(
                    "degenerate price collocation Jacobian; the books no "
                    "longer respond independently to v and u"
                )
            v += float(np.clip(upd[0], -dv_cap, dv_cap))
            u += float(np.clip(upd[1], -u_cap, u_cap))
            nf, ns, rf, rs = self._trial(v, u, m_total)
        else:
            raise ConvergenceError(
                f"price collocation failed to converge in "
                f"{self._MAX_ITERS} iterations; residuals "
                f"{rf:.3e}, {rs:.3e}"
            )
        if abs(v) * dt > 0.5 * dx:
            raise InstabilityError(
                f"frame moved {abs(v) * dt / dx:.2f} cells in one step; "
                "refine dt or coarsen the grid"
            )
        if np.max(np.abs(nf)) > self._blow:
            raise InstabilityError(
                "density exceeded 1e6 times the fast book scale; "
                "refine dt or dx"
            )
        self.phi_f, self.phi_s = nf, ns
        self._X += v * dt
        self._t += dt
        self._v, self._u = v, u
        if self._t > self._horizon * (1.0 + 1e-9):
            raise InstabilityError(
                "stepped beyond the horizon the grid was sized for; "
                "rebuild with a larger drive_time or settle_time"
            )
        return self._X

    def run(self, n_steps: int, m_total: float, record_every: int = 1,
            dt: float | None = None) -> DualTrajectory:
        """Step n_steps at constant total flow, recording the split."""
        if m_total != 0.0:
            self.dual.check_participation(unsafe=self.unsafe)
        if dt is not None and dt != self.dt:
            self._set_dt(dt)
        ts, ms, mf, xs = [], [], [], []
        for k in range(1, n_steps + 1):
            self.step(m_total)
            if k % record_every == 0 or k == n_steps:
                ts.append(self._t)
                mf.append(self._u)
                ms.append(m_total - self._u)
                xs.append(self._X)
        return DualTrajectory(np.asarray(ts), np.asarray(ms),
                              np.asarray(mf), np.asarray(xs))
