"""Heston-Nandi GARCH(1,1) common factor.

Physical-measure dynamics of the factor log return x_t with conditional
variance h_t (both in per-trading-day units)::

    x_t = r + lam * h_t + sqrt(h_t) * eps_t,        eps_t ~ N(0, 1)
    h_t = omega + alpha * (eps_{t-1} - gamma * sqrt(h_{t-1}))^2 + eta * h_{t-1}

Under the risk-neutral measure the price-of-risk coefficient becomes -1/2 and
the asymmetry parameter becomes gamma* = gamma + lam + 1/2, so the drift is
r - h_t/2 and the discounted factor level is a one-step martingale.

The conditional generating function of the future factor level,
E_t[X_T^phi] = X_t^phi * exp(A + B * h_{t+1}), is evaluated through the
backward recursion

    A_t = A_{t+1} + phi*r + B_{t+1}*omega - 0.5*ln(1 - 2*alpha*B_{t+1})
    B_t = phi*(lam + gamma) - gamma^2/2 + eta*B_{t+1}
          + 0.5*(phi - gamma)^2 / (1 - 2*alpha*B_{t+1})

with A = B = 0 at T. The log term stems from a Gaussian integral that exists
only while Re(1 - 2*alpha*B) > 0; inside that region the principal branch is
the correct and continuous choice, and leaving it raises ``NumericalError``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import DataError, EstimationError, NumericalError
from .rng import substream

_H_FLOOR = 1e-18


@dataclass(frozen=True)
class HNParams:
    """Physical-measure parameters, per trading day.

    ``lam`` is the price of risk (the paper's lambda^P).
    """

    omega: float
    alpha: float
    eta: float
    gamma: float
    lam: float

    @property
    def persistence(self) -> float:
        return self.eta + self.alpha * self.gamma**2

    @property
    def unconditional_variance(self) -> float:
        denom = 1.0 - self.persistence
        if denom <= 0:
            return np.inf
        return (self.omega + self.alpha) / denom

    def validate(self) -> None:
        if self.omega < 0 or self.alpha < 0:
            raise DataError("omega and alpha must be non-negative")
        if self.persistence >= 1:
            raise DataError(
                f"covariance stationarity violated: eta + alpha*gamma^2 = "
                f"{self.persistence:.6f} >= 1"
            )


@dataclass(frozen=True)
class RNParams:
    """Risk-neutral form: omega/alpha/eta unchanged, gamma* replaces gamma
    and the drift coefficient on h is -1/2."""

    omega: float
    alpha: float
    eta: float
    gamma_star: float


def to_risk_neutral(p: HNParams) -> RNParams:
    """Map physical parameters to the risk-neutral form (gamma* = gamma + lam + 1/2)."""
    return RNParams(p.omega, p.alpha, p.eta, p.gamma + p.lam + 0.5)


def dynamics_coefficients(params) -> tuple[float, float, float, float, float]:
    """(omega, alpha, eta, gamma_eff, lam_eff) for either parameter form."""
    if isinstance(params, RNParams):
        return params.omega, params.alpha, params.eta, params.gamma_star, -0.5
    return params.omega, params.alpha, params.eta, params.gamma, params.lam


@njit(cache=True)
def _filter_core(x, r, omega, alpha, eta, gamma, lam, h1):
    n = x.shape[0]
    h = np.empty(n)
    eps = np.empty(n)
    loglik = 0.0
    ht = h1
    for t in range(n):
        if ht < _H_FLOOR:
            ht = _H_FLOOR
        h[t] = ht
        resid = x[t] - r - lam * ht
        sq = np.sqrt(ht)
        eps[t] = resid / sq
        loglik += -0.5 * (np.log(2.0 * np.pi * ht) + resid * resid / ht)
        ht = omega + alpha * (eps[t] - gamma * sq) ** 2 + eta * ht
    return h, eps, loglik, ht


def hn_filter(params: HNParams, returns: np.ndarray, r: float, h1: float | None = None):
    """Run the variance filter; returns (h, eps, loglik, h_next).

    ``h_next`` is the one-step-ahead conditional variance after the last
    observation, which is the state the pricing recursion conditions on.
    ``h1`` defaults to the sample variance of the window.
    """
    x = np.asarray(returns, dtype=float)
    if h1 is None:
        h1 = float(np.var(x))
    return _filter_core(
        x, float(r), params.omega, params.alpha, params.eta, params.gamma, params.lam, float(h1)
    )


@dataclass
class HNFit:
    """Estimated common factor: parameters plus the filtered state series."""

    params: HNParams
    h: np.ndarray
    eps: np.ndarray
    x: np.ndarray
    h_next: float
    loglik: float
    stderr: np.ndarray
    converged: bool

    @property
    def levels(self) -> np.ndarray:
        """Factor level X_t = exp(cumulative x), normalized to 1 at window start."""
        return np.concatenate(([1.0], np.exp(np.cumsum(self.x))))


def _unpack(theta: np.ndarray) -> tuple[float, float, float, float, float] | None:
    omega = np.exp(theta[0])
    alpha = np.exp(theta[1])
    gamma = theta[2]
    lam = theta[3]
    slack = 1.0 - alpha * gamma**2
    if slack <= 0:  # stationarity unattainable for any eta >= 0
        return None
    eta = slack * expit(theta[4])
    return omega, alpha, eta, gamma, lam


def _pack(omega, alpha, eta, gamma, lam) -> np.ndarray:
    slack = 1.0 - alpha * gamma**2
    frac = min(max(eta / slack, 1e-9), 1.0 - 1e-9)
    return np.array([np.log(omega), np.log(alpha), gamma, lam, logit(frac)])


def fit_hn_garch(
    factor_returns: np.ndarray,
    r: float,
    restarts: int = 5,
    seed: int = 0,
) -> HNFit:
    """Maximum-likelihood fit of the GARCH common factor.

    Derivative-free simplex in an unconstrained parametrization (log for
    omega/alpha; eta mapped through a logistic onto [0, 1 - alpha*gamma^2) so
    covariance stationarity holds by construction), with random restarts and
    a quasi-Newton polish. h_1 is initialized at the sample variance.
    """
    x = np.asarray(factor_returns, dtype=float)
    if x.size < 100:
        raise DataError(f"need at least 100 observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("factor returns contain non-finite values")
    v0 = float(np.var(x))
    if v0 <= 0:
        raise DataError("degenerate input: factor returns have zero variance")

    def negloglik(theta: np.ndarray) -> float:
        unpacked = _unpack(theta)
        if unpacked is None:
            return 1e12
        omega, alpha, eta, gamma, lam = unpacked
        _, _, ll, _ = _filter_core(x, r, omega, alpha, eta, gamma, lam, v0)
        if not np.isfinite(ll):
            return 1e12
        return -ll

    eta0 = 0.85
    base = _pack(0.5 * v0 * (1 - eta0), 0.5 * v0 * (1 - eta0), eta0, 0.0, 0.5)
    rng = substream(seed, "fit_hn_garch")
    starts = [base]
    for _ in range(restarts):
        starts.append(base + rng.normal(0.0, [1.0, 1.0, 60.0, 1.0, 1.0]))

    best = None
    any_converged = False
    for theta0 in starts:
        nm = minimize(
            negloglik, theta0, method="Nelder-Mead",
            options={"maxiter": 5000, "xatol": 1e-8, "fatol": 1e-9 * max(1.0, abs(negloglik(theta0)))},
        )
        polish = minimize(negloglik, nm.x, method="L-BFGS-B")
        res = polish if polish.fun < nm.fun else nm
        any_converged = any_converged or bool(nm.success or polish.success)
        if best is None or res.fun < best.fun:
            best = res

    unpacked = _unpack(best.x)
    if unpacked is None or not np.isfinite(best.fun):
        raise EstimationError("common-factor likelihood never became finite", best=best)
    omega, alpha, eta, gamma, lam = unpacked
    params = HNParams(omega, alpha, eta, gamma, lam)
    h, eps, loglik, h_next = hn_filter(params, x, r, v0)
    stderr = _asymptotic_stderr(x, r, v0, params)
    if not any_converged:
        raise EstimationError("optimizer did not converge after restarts", best=params)
    return HNFit(params, h, eps, x, float(h_next), float(loglik), stderr, True)


def _asymptotic_stderr(x, r, h1, params: HNParams) -> np.ndarray:
    """sqrt(diag(inv(-Hessian))) of the log-likelihood in natural parameters."""
    theta = np.array([params.omega, params.alpha, params.eta, params.gamma, params.lam])
    steps = np.maximum(np.abs(theta) * 1e-4, [1e-11, 1e-11, 1e-6, 1e-4, 1e-4])

    def ll(vec):
        _, _, value, _ = _filter_core(x, r, vec[0], vec[1], vec[2], vec[3], vec[4], h1)
        return value

    k = theta.size
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k); ei[i] = steps[i]
            ej = np.zeros(k); ej[j] = steps[j]
            f = (
                ll(theta + ei + ej) - ll(theta + ei - ej)
                - ll(theta - ei + ej) + ll(theta - ei - ej)
            ) / (4 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = f
    try:
        cov = np.linalg.inv(-hess)
        diag = np.diag(cov)
        out = np.sqrt(np.where(diag > 0, diag, np.nan))
    except np.linalg.LinAlgError:
        out = np.full(k, np.nan)
    return out


def gen_fn_coeffs(params, t: int, T: int, phi, r: float):
    """A(s;T,phi), B(s;T,phi) for s = t..T (arrays of length T - t + 1).

    Backward recursion with terminal conditions A = B = 0. ``params`` may be
    physical (:class:`HNParams`) or risk-neutral (:class:`RNParams`).
    Raises :class:`NumericalError` when 1 - 2*alpha*B leaves the right
    half-plane, where the underlying Gaussian integral stops existing.
    """
    if t > T:
        raise ValueError("need t <= T")
    omega, alpha, eta, gamma, lam = dynamics_coefficients(params)
    real_input = not np.iscomplexobj(np.asarray(phi))
    z = complex(phi)
    n = T - t + 1
    A = np.zeros(n, dtype=complex)
    B = np.zeros(n, dtype=complex)
    for idx in range(n - 2, -1, -1):
        Bn = B[idx + 1]
        denom = 1.0 - 2.0 * alpha * Bn
        if abs(denom) < 1e-12 or denom.real <= 0.0:
            raise NumericalError(
                f"generating-function recursion left its domain at step {idx + t}: "
                f"1 - 2*alpha*B = {denom!r}"
            )
        A[idx] = A[idx + 1] + z * r + Bn * omega - 0.5 * np.log(denom)
        B[idx] = z * (lam + gamma) - 0.5 * gamma**2 + eta * Bn + 0.5 * (z - gamma) ** 2 / denom
    if real_input:
        return A.real, B.real
    return A, B


@njit(cache=True)
def _ab_core(n_steps, z, r, omega, alpha, eta, gamma, lam):
    m = z.shape[0]
    A = np.zeros(m, dtype=np.complex128)
    B = np.zeros(m, dtype=np.complex128)
    drift = np.empty(m, dtype=np.complex128)
    base = np.empty(m, dtype=np.complex128)
    half_sq = np.empty(m, dtype=np.complex128)
    for k in range(m):
        drift[k] = z[k] * r
        base[k] = z[k] * (lam + gamma) - 0.5 * gamma * gamma
        zg = z[k] - gamma
        half_sq[k] = 0.5 * zg * zg
    for _ in range(n_steps):
        for k in range(m):
            denom = 1.0 - 2.0 * alpha * B[k]
            if denom.real < 1e-12:
                return A, B, k
            A[k] = A[k] + drift[k] + B[k] * omega - 0.5 * np.log(denom)
            B[k] = base[k] + eta * B[k] + half_sq[k] / denom
    return A, B, -1


def ab_initial(params, n_steps: int, z: np.ndarray, r: float):
    """Vectorized (A, B) at the window start for an array of arguments ``z``.

    Equivalent to ``gen_fn_coeffs(params, 0, n_steps, z_k, r)[...][0]`` for
    each node but runs the backward recursion once across all nodes; this is
    the pricing hot path.
    """
    omega, alpha, eta, gamma, lam = dynamics_coefficients(params)
    z = np.ascontiguousarray(np.asarray(z, dtype=np.complex128))
    A, B, bad = _ab_core(n_steps, z, float(r), omega, alpha, eta, gamma, lam)
    if bad >= 0:
        raise NumericalError(
            f"generating-function recursion left its domain at node z={z[bad]!r}"
        )
    return A, B


def common_factor_gf(params, X_t: float, h_next: float, t: int, T: int, phi, r: float):
    """Conditional generating function f(phi) = E_t[X_T^phi].

    ``h_next`` is the conditional variance of the first simulated step
    (h_{t+1}), which is known at time t.
    """
    if X_t <= 0:
        raise DataError("factor level must be positive")
    if h_next <= 0:
        raise DataError("conditional variance must be positive")
    A, B = gen_fn_coeffs(params, t, T, phi, r)
    value = np.exp(phi * np.log(X_t) + A[0] + B[0] * h_next)
    return value


def simulate_factor(params, r: float, h_start: float, horizon_days: int, n_paths: int, rng):
    """Simulate factor paths; returns (x, h) arrays of shape (n_paths, horizon).

    ``rng`` is a numpy Generator (use :func:`corrjump.rng.substream`) or an
    integer master seed. Works for both parameter forms.
    """
    if h_start <= 0:
        raise DataError("h_start must be positive")
    if n_paths < 1:
        raise DataError("n_paths must be at least 1")
    if isinstance(rng, (int, np.integer)):
        rng = substream(int(rng), "simulate_factor")
    omega, alpha, eta, gamma, lam = dynamics_coefficients(params)
    x = np.empty((n_paths, horizon_days))
    h = np.empty((n_paths, horizon_days))
    ht = np.full(n_paths, float(h_start))
    for s in range(horizon_days):
        eps = rng.standard_normal(n_paths)
        sq = np.sqrt(ht)
        h[:, s] = ht
        x[:, s] = r + lam * ht + sq * eps
        ht = omega + alpha * (eps - gamma * sq) ** 2 + eta * ht
    return x, h
