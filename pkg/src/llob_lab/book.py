"""Grid solver for the reaction-diffusion latent order book.

The density phi(x, t) obeys

    d_t phi = D d_xx phi - nu phi + lam sign(x_t - x) + m_t delta(x - x_t)

with the price x_t pinned to the zero of phi.  One step applies half of
the source terms at the current price, an exact cancellation factor
exp(-nu dt) together with a Crank-Nicolson diffusion solve, then the
second source half at the refreshed price.  The deposition field has a
curvature jump 2 lam / D at the price and the point source a slope jump
m / D; the diffusion stage carries a two-cell correction for the former,
and the price locator models the latter, so the step stays second order
in dx.  Boundary cells ride through the solve and are re-clamped to
their initial values at the end of every step, holding the far field at
the analytic plateau.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridTooNarrowError, InstabilityError, NoRootError
from .params import Grid, MetaOrderSpec, ModelParams, stationary_profile

_SNAP = 1e-9  # price-to-node snapping tolerance, in units of dx
_BLOWUP = 1e6  # instability threshold, in units of the book scale


@dataclass
class BookState:
    """Book density with its price and clamped boundary values."""

    phi: np.ndarray
    t: float
    price: float
    grid: Grid
    bc_lo: float
    bc_hi: float

    def copy(self) -> "BookState":
        return replace(self, phi=self.phi.copy())


@dataclass
class Trajectory:
    """Per-step record of a simulated run."""

    t: np.ndarray
    x: np.ndarray
    phi_min: np.ndarray
    phi_max: np.ndarray
    mass: np.ndarray

    def write_csv(self, path, stride: int = 1) -> None:
        sl = slice(None, None, stride)
        cols = np.column_stack(
            [self.t[sl], self.x[sl], self.phi_min[sl], self.phi_max[sl], self.mass[sl]]
        )
        header = "t,x,phi_min,phi_max,mass"
        np.savetxt(path, cols, fmt="%.12e", delimiter=",", header=header,
                   comments="", newline="\n")


def _refine_root(phi: np.ndarray, centers: np.ndarray, dx: float,
                 j: int, linear: float) -> float:
    """Sub-cell zero in cell (j, j+1) allowing for a slope kink.

    The profile carries a slope discontinuity at the price whenever a
    point source is active, so a straight line through the bracketing
    nodes locates the zero only to first order in dx.  Model the cell as
    two lines, with slopes taken from the neighbouring cells, meeting at
    a vertex inside the cell; for data that are piecewise linear with a
    single kink this is exact.  Falls back to ``linear`` whenever the
    construction degenerates or leaves the cell.
    """
    n = phi.shape[0]
    if j < 1 or j + 2 >= n:
        return linear
    s_lo = (phi[j] - phi[j - 1]) / dx
    s_hi = (phi[j + 2] - phi[j + 1]) / dx
    ds = s_lo - s_hi
    if ds == 0.0:
        return linear
    xv = (phi[j + 1] - phi[j] + s_lo * centers[j] - s_hi * centers[j + 1]) / ds
    if not centers[j] <= xv <= centers[j + 1]:
        return linear
    pv = phi[j] + s_lo * (xv - centers[j])
    if phi[j] == 0.0:
        return centers[j]
    if pv == 0.0:
        return xv
    if (phi[j] > 0.0) != (pv > 0.0):
        root = centers[j] - phi[j] / s_lo if s_lo != 0.0 else linear
        lo, hi = centers[j], xv
    else:
        root = centers[j + 1] - phi[j + 1] / s_hi if s_hi != 0.0 else linear
        lo, hi = xv, centers[j + 1]
    if not lo <= root <= hi:
        return linear
    return root


def _candidate_roots(phi, centers, dx):
    exact = np.flatnonzero(phi == 0.0)
    cross = np.flatnonzero(phi[:-1] * phi[1:] < 0.0)
    roots = centers[cross] + dx * phi[cross] / (phi[cross] - phi[cross + 1])
    cand = np.concatenate([roots, centers[exact]]) if exact.size else roots
    if cand.size == 0:
        raise NoRootError("book density has uniform sign, no price exists")
    return cand, roots, cross


def _locate_price(phi: np.ndarray, centers: np.ndarray, dx: float,
                  prev: float) -> float:
    cand, roots, cross = _candidate_roots(phi, centers, dx)
    best = int(np.argmin(np.abs(cand - prev)))
    if best < roots.size:
        j = int(cross[best])
        return float(_refine_root(phi, centers, dx, j, float(roots[best])))
    return float(cand[best])


def find_price(state: BookState) -> float:
    """Zero crossing of the book, linearly interpolated between the two
    bracketing cells; with several crossings the one nearest the previous
    price wins."""
    grid = state.grid
    prev = state.price if np.isfinite(state.price) else 0.0
    cand, _, _ = _candidate_roots(state.phi, grid.centers(), grid.dx)
    return float(cand[int(np.argmin(np.abs(cand - prev)))])


class _StepKernel:
    """Precomputed arrays for repeated steps on a fixed grid and dt."""

    def __init__(self, params: ModelParams, grid: Grid, dt: float):
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.params = params
        self.grid = grid
        self.dt = dt
        self.centers = grid.centers()
        self.dx = grid.dx
        self.n = grid.n_cells
        self.decay = float(np.exp(-params.nu * dt))
        r = params.D * dt / (self.dx * self.dx)
        self.r = r
        # Banded Crank-Nicolson matrix with identity boundary rows.
        ab = np.zeros((3, self.n))
        ab[0, 2:] = -0.5 * r
        ab[1, :] = 1.0 + r
        ab[1, 0] = ab[1, -1] = 1.0
        ab[2, :-2] = -0.5 * r
        self.ab = ab
        if params.infinite_memory:
            span = max(abs(grid.x_min), abs(grid.x_max))
            self.blow_scale = _BLOWUP * params.slope * span
        else:
            self.blow_scale = _BLOWUP * params.lam / params.nu

    def _snap(self, x_star: float) -> float:
        g = (x_star - self.centers[0]) / self.dx
        j = int(np.round(g))
        if 0 <= j < self.n and abs(x_star - self.centers[j]) < _SNAP * self.dx:
            return float(self.centers[j])
        return x_star

    def _source(self, x_star: float, m: float) -> np.ndarray:
        p = self.params
        if p.lam > 0.0:
            src = p.lam * np.sign(x_star - self.centers)
            # Cell-averaged sign in the cell that straddles the price,
            # else the deposition is only first-order accurate there.
            i = int(np.floor((x_star - self.centers[0]) / self.dx + 0.5))
            if 0 <= i < self.n:
                frac = 2.0 * (x_star - self.centers[i]) / self.dx
                src[i] = p.lam * min(1.0, max(-1.0, frac))
        else:
            src = np.zeros(self.n)
        if m != 0.0:
            g = (x_star - self.centers[0]) / self.dx
            j = int(np.floor(g))
            theta = g - j
            if not 0 <= j < self.n - 1:
                raise InstabilityError("price left the grid")
            src[j] += m * (1.0 - theta) / self.dx
            src[j + 1] += m * theta / self.dx
        return src

    def _diffuse(self, w: np.ndarray, x_star: float) -> np.ndarray:
        # Edge cells ride through unchanged (ghost evolution); the final
        # clamp at the end of the step restores the Dirichlet values.
        r = self.r
        rhs = np.empty_like(w)
        rhs[1:-1] = w[1:-1] + 0.5 * r * (w[:-2] - 2.0 * w[1:-1] + w[2:])
        rhs[0] = w[0]
        rhs[-1] = w[-1]
        lam = self.params.lam
        if lam > 0.0:
            # Curvature-jump correction at the kink the deposition field
            # keeps at the price; skipped when the kink sits on a node.
            g = (x_star - self.centers[0]) / self.dx
            j = int(np.floor(g))
            theta = g - j
            if _SNAP < theta < 1.0 - _SNAP and 1 <= j < self.n - 2:
                rhs[j] -= self.dt * lam * (1.0 - theta) ** 2
                rhs[j + 1] += self.dt * lam * theta**2
        return solve_banded((1, 1), self.ab, rhs)

    def _price(self, phi: np.ndarray, prev: float) -> float:
        return _locate_price(phi, self.centers, self.dx, prev)

    def advance(self, state: BookState, m_mid: float) -> BookState:
        p = self.params
        x0 = state.price
        if not np.isfinite(x0):
            if p.lam > 0.0 or m_mid != 0.0:
                raise NoRootError("sources need a defined price")
            phi = self._diffuse(self.decay * state.phi, np.nan)
            phi[0] = state.bc_lo
            phi[-1] = state.bc_hi
            return replace(state, phi=phi, t=state.t + self.dt)
        x0 = self._snap(x0)
        w = state.phi + 0.5 * self.dt * self._source(x0, m_mid)
        w *= self.decay
        phi = self._diffuse(w, x0)
        x1 = self._snap(self._price(phi, x0))
        phi = phi + 0.5 * self.dt * self._source(x1, m_mid)
        phi[0] = state.bc_lo
        phi[-1] = state.bc_hi
        x2 = self._price(phi, x1)
        if np.max(np.abs(phi)) > self.blow_scale:
            raise InstabilityError(
                "density exceeded 1e6 times the book scale; refine dt or dx"
            )
        return replace(state, phi=phi, t=state.t + self.dt, price=x2)


def stationary_book(params: ModelParams, grid: Grid) -> BookState:
    """Book initialized on the stationary profile with price at zero."""
    if not params.infinite_memory and grid.width < 8.0 * params.xi_c:
        raise GridTooNarrowError(
            "domain narrower than 8 xi_c cannot hold the stationary book"
        )
    phi = stationary_profile(grid.centers(), params)
    return BookState(phi=phi, t=0.0, price=0.0, grid=grid,
                     bc_lo=float(phi[0]), bc_hi=float(phi[-1]))


def book_from_profile(phi, grid: Grid, t: float = 0.0) -> BookState:
    """Wrap an arbitrary density sample; price may be undefined."""
    phi = np.asarray(phi, dtype=float).copy()
    if phi.shape != (grid.n_cells,):
        raise ValueError("profile length must match the grid")
    state = BookState(phi=phi, t=t, price=np.nan, grid=grid,
                      bc_lo=float(phi[0]), bc_hi=float(phi[-1]))
    try:
        state.price = find_price(state)
    except NoRootError:
        pass
    return state


def default_dt(params: ModelParams, grid: Grid) -> float:
    """Accuracy-motivated step: 0.1 dx^2 / D, capped by 0.1 / nu."""
    dt = 0.1 * grid.dx * grid.dx / params.D
    if params.nu > 0.0:
        dt = min(dt, 0.1 / params.nu)
    return dt


def step(state: BookState, params: ModelParams,
         order: MetaOrderSpec | None, dt: float) -> BookState:
    """Advance one step; the order rate is sampled at the step midpoint."""
    kernel = _StepKernel(params, state.grid, dt)
    m_mid = order.rate_at(state.t + 0.5 * dt) if order is not None else 0.0
    return kernel.advance(state, m_mid)


def simulate_metaorder(params: ModelParams, order: MetaOrderSpec | None,
                       grid: Grid, dt: float | None = None,
                       t_end: float | None = None,
                       state: BookState | None = None) -> Trajectory:
    """Run a meta-order (or free relaxation) and record the trajectory.

    Parameters
    ----------
    params, order, grid : model, schedule (None for free evolution), domain.
    dt : time step; default ``default_dt``.
    t_end : final time; default is the order horizon.
    state : starting book; default is the stationary book.

    Returns
    -------
    Trajectory with t (including t = 0), price, phi extrema and total
    volume after every step.
    """
    if t_end is None:
        if order is None:
            raise ValueError("t_end is required when no order is given")
        t_end = order.horizon
    if dt is None:
        dt = default_dt(params, grid)
    need = 8.0 * np.sqrt(params.D * t_end)
    if not params.infinite_memory:
        need = max(need, 8.0 * params.xi_c)
    if grid.width < need:
        raise GridTooNarrowError(
            f"domain width {grid.width:g} below the required {need:g}"
        )
    if state is None:
        state = stationary_book(params, grid)
    kernel = _StepKernel(params, grid, dt)
    n_steps = int(np.ceil(t_end / dt - 1e-12))
    t = np.empty(n_steps + 1)
    x = np.empty(n_steps + 1)
    lo = np.empty(n_steps + 1)
    hi = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    dx = grid.dx

    def record(i, s):
        t[i] = s.t
        x[i] = s.price
        lo[i] = s.phi.min()
        hi[i] = s.phi.max()
        mass[i] = s.phi.sum() * dx

    record(0, state)
    for i in range(n_steps):
        m_mid = order.rate_at(state.t + 0.5 * dt) if order is not None else 0.0
        state = kernel.advance(state, m_mid)
        record(i + 1, state)
    return Trajectory(t=t, x=x, phi_min=lo, phi_max=hi, mass=mass)
