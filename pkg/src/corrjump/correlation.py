"""DCC(1,1) on standardized idiosyncratic residuals.

Engle's two-step estimator: residuals are standardized by their per-firm
sample volatility, the unconditional correlation matrix is the (uncentered,
population) second-moment matrix of the standardized residuals, and the news
and persistence weights (a, b) maximize the correlation quasi-likelihood of
the recursion

    Q_t = (1 - a - b) * Rbar + a * z_{t-1} z_{t-1}' + b * Q_{t-1}
    R_t = diag(Q_t)^{-1/2} Q_t diag(Q_t)^{-1/2}

with Q_1 = Rbar. The covariance handed to the simulator is
Omega_t = diag(s) R_t diag(s) with s the per-firm residual volatilities, and
simulation holds Omega at its window-end value over the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import DataError, NumericalError
from .rng import substream


@dataclass(frozen=True)
class DCCParams:
    """News weight, persistence, unconditional correlation, residual variances."""

    a: float
    b: float
    rbar: np.ndarray
    variances: np.ndarray

    def validate(self) -> None:
        if self.a < 0 or self.b < 0 or self.a + self.b >= 1:
            raise DataError("DCC weights need a >= 0, b >= 0, a + b < 1")


@dataclass
class DCCFit:
    params: DCCParams
    correlations: np.ndarray  # (n_days, J, J)
    loglik: float
    converged: bool
    fallback: bool

    @property
    def covariances(self) -> np.ndarray:
        s = np.sqrt(self.params.variances)
        return self.correlations * np.outer(s, s)

    @property
    def omega_last(self) -> np.ndarray:
        return self.covariances[-1]


@njit(cache=True)
def _dcc_loop(z, rbar, a, b, keep):
    n, j = z.shape
    Q = rbar.copy()
    R_series = np.empty((n if keep else 1, j, j))
    ll = 0.0
    d = np.empty(j)
    R = np.empty((j, j))
    for t in range(n):
        for k in range(j):
            d[k] = 1.0 / np.sqrt(Q[k, k])
        for p in range(j):
            for q in range(j):
                R[p, q] = Q[p, q] * d[p] * d[q]
        if keep:
            R_series[t] = R
        else:
            R_series[0] = R
        sign, logdet = np.linalg.slogdet(R)
        if sign <= 0:
            return -np.inf, R_series
        zt = z[t]
        sol = np.linalg.solve(R, zt)
        quad = 0.0
        self_quad = 0.0
        for k in range(j):
            quad += zt[k] * sol[k]
            self_quad += zt[k] * zt[k]
        ll += -0.5 * (logdet + quad - self_quad)
        for p in range(j):
            for q in range(j):
                Q[p, q] = (1.0 - a - b) * rbar[p, q] + a * zt[p] * zt[q] + b * Q[p, q]
    return ll, R_series


def nearest_psd(matrix: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Eigenvalue-clipped PSD projection; returns (matrix, largest shift)."""
    sym = 0.5 * (matrix + matrix.T)
    vals, vecs = np.linalg.eigh(sym)
    shift = float(max(0.0, -vals.min()))
    if shift == 0.0:
        return sym, 0.0
    if shift > tol:
        raise NumericalError(f"matrix is non-PSD beyond tolerance (min eig {-shift:.3e})")
    clipped = np.clip(vals, 0.0, None)
    return (vecs * clipped) @ vecs.T, shift


def fit_dcc(residuals: np.ndarray, seed: int = 0) -> DCCFit:
    """Two-step DCC fit of a (n_days, n_firms) residual matrix.

    Falls back to constant correlation (a = b = 0, flagged) when the
    quasi-likelihood optimization fails to produce a finite optimum.
    """
    w = np.asarray(residuals, dtype=float)
    if w.ndim != 2:
        raise DataError("residuals must be (n_days, n_firms)")
    n, j = w.shape
    if j == 1:
        var = np.array([float(np.mean(w[:, 0] ** 2))])
        params = DCCParams(0.0, 0.0, np.ones((1, 1)), var)
        return DCCFit(params, np.ones((n, 1, 1)), 0.0, True, False)
    if j < 2 or n <= 10 * j:
        raise DataError(f"DCC needs n_days > 10*n_firms; got {n} days, {j} firms")

    scale = np.sqrt(np.mean(w**2, axis=0))
    if np.any(scale <= 0):
        raise DataError("a residual series is identically zero")
    z = np.ascontiguousarray(w / scale)
    rbar = z.T @ z / n
    np.fill_diagonal(rbar, 1.0)
    rbar, _ = nearest_psd(rbar)
    np.fill_diagonal(rbar, 1.0)

    def negloglik(u):
        total = expit(u[0])
        frac = expit(u[1])
        a, b = total * frac, total * (1.0 - frac)
        ll, _ = _dcc_loop(z, rbar, a, b, False)
        return -ll if np.isfinite(ll) else 1e12

    u0 = np.array([logit(0.95), logit(0.05 / 0.95)])
    res = minimize(
        negloglik, u0, method="Nelder-Mead",
        options={"maxiter": 400, "xatol": 1e-6, "fatol": 1e-9},
    )
    fallback = not np.isfinite(res.fun) or res.fun >= 1e12
    if fallback:
        a = b = 0.0
    else:
        total, frac = expit(res.x[0]), expit(res.x[1])
        a, b = float(total * frac), float(total * (1.0 - frac))
    ll, r_series = _dcc_loop(z, rbar, a, b, True)
    params = DCCParams(a, b, rbar, scale**2)
    return DCCFit(params, r_series, float(ll), bool(res.success) and not fallback, fallback)


def psd_factor(matrix: np.ndarray) -> np.ndarray:
    """A factor L with L L' = matrix; Cholesky when PD, eigen-based when PSD."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        fixed, _ = nearest_psd(matrix)
        vals, vecs = np.linalg.eigh(fixed)
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_residual_shocks(
    params: DCCParams, omega_last: np.ndarray, horizon_days: int, n_paths: int, rng
) -> np.ndarray:
    """MVN(0, Omega) draws of shape (n_paths, horizon, n_firms).

    Omega is held at its window-end value for the whole simulation horizon;
    deterministic given the generator state.
    """
    if isinstance(rng, (int, np.integer)):
        rng = substream(int(rng), "residual_shocks")
    omega = np.asarray(omega_last, dtype=float)
    factor = psd_factor(omega)
    z = rng.standard_normal((n_paths, horizon_days, omega.shape[0]))
    return z @ factor.T
