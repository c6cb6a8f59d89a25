"""Power-law fitting helpers: log-log least squares, bootstrap errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, WindowTooShortError


@dataclass(frozen=True)
class ExponentEstimate:
    """Fitted power-law exponent with uncertainty and fit quality."""

    value: float
    stderr: float
    r2: float
    window: tuple

    @property
    def reliable(self) -> bool:
        """Whether a power law described the data at all (R^2 >= 0.8)."""
        return bool(self.r2 >= 0.8)


def _masked_logs(x, y, window):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (x > 0.0) & (y > 0.0) & np.isfinite(x) & np.isfinite(y)
    if window is not None:
        lo, hi = window
        m &= (x >= lo) & (x <= hi)
    if int(m.sum()) < 4:
        raise WindowTooShortError(
            f"only {int(m.sum())} usable points in the fit window; need 4"
        )
    return np.log(x[m]), np.log(y[m])


def fit_exponent(x, y, window=None) -> ExponentEstimate:
    """Least-squares slope of log y against log x.

    Nonpositive samples are dropped; ``window`` restricts x to [lo, hi].
    The standard error is the usual OLS slope error, which understates
    the uncertainty for correlated residuals; use ensemble_exponent
    when independent realizations are available.
    """
    lx, ly = _masked_logs(x, y, window)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 0.0
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    dof = max(lx.size - 2, 1)
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0.0 else math.inf
    return ExponentEstimate(float(coef[0]), stderr, r2,
                            (float(np.exp(lx.min())), float(np.exp(lx.max()))))


def ensemble_exponent(x, curves, window=None, n_boot: int = 200,
                      seed: int = 0) -> ExponentEstimate:
    """Exponent of the ensemble-mean curve, error bar by resampling.

    ``curves`` is (n_realizations, n_samples); realizations are drawn
    with replacement n_boot times and the refitted slopes' spread is
    the standard error.
    """
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    n_real = curves.shape[0]
    if n_real < 2:
        raise InsufficientDataError(
            "ensemble_exponent needs at least 2 realizations"
        )
    base = fit_exponent(x, curves.mean(axis=0), window)
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_boot):
        idx = rng.integers(0, n_real, n_real)
        try:
            vals.append(fit_exponent(x, curves[idx].mean(axis=0),
                                     window).value)
        except WindowTooShortError:
            continue
    stderr = float(np.std(vals, ddof=1)) if len(vals) > 1 else math.inf
    return ExponentEstimate(base.value, stderr, base.r2, base.window)
