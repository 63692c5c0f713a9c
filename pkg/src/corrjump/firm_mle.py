"""Per-firm structural estimation on inverted asset values.

Each day's observed equity S_t is inverted through the pricing engine into an
implied asset value V_t (one-year rolling maturity, debt growing at r). The
log-likelihood of the structural parameters (mu, loading, xi) is the Gaussian
likelihood of the implied asset log returns with the change-of-variables
terms: a -sum(ln V_t) term and a -sum(ln dS/dV) pricing-Jacobian term. The
conditional variance per day is

    sigma_t^2 = loading^2 * h_t + xi + lam * (a^2 + b^2)

and the mean term carries the compensated jump contribution a*lam - qbar*lam,
which cancels identically because the mark mean equals a (kept as written).

Because the implied asset path does not depend on mu, mu is profiled out
exactly (sigma^2-weighted mean) and the simplex runs over (loading, ln xi).
The benchmark variant re-estimates with the jump component forced to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .common_factor import HNParams
from .errors import DataError, EstimationError, InversionError
from .jumps import JumpParams
from .pricing import PricingContext, PricingKernel, QuadratureSpec

XI_FLOOR = 1e-10  # per-day variance floor

DEFAULT_MATURITY = 252  # implied call option maturity, trading days


@dataclass(frozen=True)
class FirmParams:
    """Structural parameters of one firm's asset return process, per day."""

    mu: float
    loading: float
    xi: float

    def validate(self) -> None:
        if self.xi < XI_FLOOR:
            raise DataError(f"xi below the {XI_FLOOR} variance floor")
        if not np.all(np.isfinite([self.mu, self.loading, self.xi])):
            raise DataError("non-finite firm parameters")


@dataclass
class FirmFit:
    """Estimated firm: parameters, implied asset path, residuals, likelihood."""

    params: FirmParams
    asset_values: np.ndarray
    asset_returns: np.ndarray
    residuals: np.ndarray
    loglik: float
    benchmark: bool
    stderr: np.ndarray
    converged: bool


def firm_jump_slice(jumps: JumpParams, j: int) -> tuple[float, float, float]:
    return float(jumps.lam), float(jumps.a[j]), float(jumps.b[j])


def cond_variance(fp: FirmParams, jumps, h_t):
    """Conditional asset-return variance per day (law of total variance).

    ``jumps`` is either a (lam, a, b) triple for one firm or a JumpParams of
    length 1. Vectorized over ``h_t``.
    """
    if isinstance(jumps, JumpParams):
        lam, a, b = firm_jump_slice(jumps, 0)
    else:
        lam, a, b = jumps
    h = np.asarray(h_t, dtype=float)
    if np.any(h <= 0):
        raise DataError("conditional variance h_t must be positive")
    return fp.loading**2 * h + fp.xi + lam * (a**2 + b**2)


def _pricing_context(hn, lam, a, b, loading, xi, r, tau, h_ref, debt_ref):
    return PricingContext(
        factor=hn, loading=loading, xi=xi, jump_lam=lam, jump_mean=a,
        jump_vol=b, r=r, tau=tau, h_next=h_ref, debt=debt_ref,
    )


class _LikelihoodEngine:
    """Shared state for repeated likelihood evaluations on one firm window."""

    def __init__(self, equity, debt, x, r, hn: HNParams, h, h_next, jump_triple,
                 quad: QuadratureSpec, tau: int):
        self.S = np.asarray(equity, dtype=float)
        self.D = np.asarray(debt, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.r = float(r)
        self.hn = hn
        self.h = np.asarray(h, dtype=float)
        self.h_state = np.append(self.h[1:], h_next)  # h_{t+1} known at day t
        self.lam, self.a, self.b = jump_triple
        self.quad = quad
        self.tau = tau
        self.warm: np.ndarray | None = None
        self.last_diag: str | None = None
        n = self.S.size
        if not (self.D.size == n and self.x.size == n and self.h.size == n):
            raise DataError("equity, debt, factor, and variance series must align")
        if np.any(self.S <= 0):
            raise DataError("equity prices must be positive")

    def invert_path(self, loading: float, xi: float, rtol: float = 1e-10):
        ctx = _pricing_context(
            self.hn, self.lam, self.a, self.b, loading, xi,
            self.r, self.tau, float(self.h_state[-1]), float(self.D[-1]),
        )
        kernel = PricingKernel(ctx, self.quad)
        values = kernel.invert(self.S, self.D, self.h_state, initial=self.warm, rtol=rtol)
        self.warm = values
        return values, kernel

    def loglik(self, mu: float | None, loading: float, xi: float, rtol: float = 1e-10):
        """Log-likelihood; with mu=None the profiled optimum is used.

        Returns (loglik, mu_used, values, returns, residuals).
        """
        xi = max(xi, XI_FLOOR)
        try:
            values, kernel = self.invert_path(loading, xi, rtol=rtol)
        except InversionError as exc:
            self.last_diag = str(exc)
            return -np.inf, np.nan, None, None, None
        logv = np.log(values)
        v = np.diff(logv)
        sigma2 = loading**2 * self.h[1:] + xi + self.lam * (self.a**2 + self.b**2)
        _, jac = kernel.price_delta(values[1:], self.D[1:], self.h_state[1:])
        base = v - loading * (self.x[1:] - self.r) - (self.a * self.lam - self.a * self.lam)
        if mu is None:
            w = 1.0 / sigma2
            mu = float(np.sum(w * base) / np.sum(w))
        dev = base - mu
        n1 = v.size
        ll = (
            -0.5 * n1 * np.log(2.0 * np.pi)
            - np.sum(logv[1:])
            - 0.5 * np.sum(np.log(sigma2))
            - np.sum(np.log(jac))
            - 0.5 * np.sum(dev**2 / sigma2)
        )
        resid = v - mu - loading * (self.x[1:] - self.r)
        return float(ll), float(mu), values, v, resid


def firm_loglik(
    theta: FirmParams,
    equity: np.ndarray,
    debt: np.ndarray,
    factor_returns: np.ndarray,
    r: float,
    hn: HNParams,
    jumps,
    quad: QuadratureSpec | None = None,
    factor_variance: np.ndarray | None = None,
    h_next: float | None = None,
    tau: int = DEFAULT_MATURITY,
) -> float:
    """One-shot likelihood evaluation at ``theta``.

    ``factor_variance``/``h_next`` are the filtered h series of the window;
    when omitted they are recomputed from the factor returns. Inversion
    failure on any day yields -inf (diagnostic retained on the engine).
    """
    from .common_factor import hn_filter

    if factor_variance is None or h_next is None:
        h, _, _, hnx = hn_filter(hn, factor_returns, r)
        factor_variance = h if factor_variance is None else factor_variance
        h_next = float(hnx) if h_next is None else h_next
    triple = jumps if isinstance(jumps, tuple) else firm_jump_slice(jumps, 0)
    engine = _LikelihoodEngine(
        equity, debt, factor_returns, r, hn, factor_variance, h_next,
        triple, quad or QuadratureSpec(), tau,
    )
    ll, _, _, _, _ = engine.loglik(theta.mu, theta.loading, theta.xi)
    return ll


def _initial_guess(engine: _LikelihoodEngine) -> tuple[float, float]:
    """Equity-return regression on the factor, de-levered."""
    es = np.diff(np.log(engine.S))
    xs = engine.x[1:] - engine.r
    var_x = np.var(xs)
    beta = float(np.cov(es, xs, bias=True)[0, 1] / var_x) if var_x > 0 else 0.5
    resid = es - beta * xs
    lever = (engine.S[-1] + engine.D[-1]) / engine.S[-1]
    loading0 = beta / lever
    jump_var = engine.lam * (engine.a**2 + engine.b**2)
    xi0 = max(float(np.var(resid)) / lever**2 - jump_var, 10 * XI_FLOOR)
    return loading0, xi0


def fit_firm(
    equity: np.ndarray,
    debt: np.ndarray,
    factor_returns: np.ndarray,
    r: float,
    hn: HNParams,
    jumps,
    quad: QuadratureSpec | None = None,
    benchmark: bool = False,
    factor_variance: np.ndarray | None = None,
    h_next: float | None = None,
    tau: int = DEFAULT_MATURITY,
    compute_stderr: bool = False,
    xatol: float = 1e-5,
) -> FirmFit:
    """Maximum-likelihood fit of (mu, loading, xi) for one firm window.

    ``benchmark=True`` forces the jump component to zero (the nested no-jump
    model) before estimating, so its parameters absorb whatever the jumps
    explained. Raises :class:`EstimationError` with the best iterate when the
    simplex fails to converge.
    """
    from .common_factor import hn_filter

    if factor_variance is None or h_next is None:
        h, _, _, hnx = hn_filter(hn, factor_returns, r)
        factor_variance = h if factor_variance is None else factor_variance
        h_next = float(hnx) if h_next is None else h_next
    if benchmark:
        triple = (0.0, 0.0, 0.0)
    else:
        triple = jumps if isinstance(jumps, tuple) else firm_jump_slice(jumps, 0)
    engine = _LikelihoodEngine(
        equity, debt, factor_returns, r, hn, factor_variance, h_next,
        triple, quad or QuadratureSpec(), tau,
    )
    loading0, xi0 = _initial_guess(engine)

    def negloglik(point):
        loading, lxi = point
        ll, _, _, _, _ = engine.loglik(None, loading, float(np.exp(lxi)), rtol=1e-9)
        return 1e12 if not np.isfinite(ll) else -ll

    x0 = np.array([loading0, np.log(xi0)])
    res = minimize(
        negloglik, x0, method="Nelder-Mead",
        options={"maxiter": 600, "xatol": xatol, "fatol": 1e-7 * max(1.0, abs(negloglik(x0)))},
    )
    loading, xi = float(res.x[0]), float(np.exp(res.x[1]))
    ll, mu, values, v, resid = engine.loglik(None, loading, xi)
    if not np.isfinite(ll):
        raise EstimationError(
            f"firm likelihood non-finite at optimum ({engine.last_diag})",
            best=FirmParams(np.nan, loading, xi),
        )
    params = FirmParams(mu, loading, max(xi, XI_FLOOR))
    stderr = (
        _firm_stderr(engine, params) if compute_stderr else np.full(3, np.nan)
    )
    if not res.success:
        raise EstimationError(
            "firm simplex did not converge",
            best=FirmFit(params, values, v, resid, float(ll), benchmark, stderr, False),
        )
    return FirmFit(params, values, v, resid, float(ll), benchmark, stderr, True)


def _firm_stderr(engine: _LikelihoodEngine, params: FirmParams) -> np.ndarray:
    """Asymptotic standard errors from a central-difference Hessian."""
    theta = np.array([params.mu, params.loading, params.xi])
    steps = np.maximum(np.abs(theta) * 1e-4, [1e-7, 1e-4, 1e-8])

    def ll(vec):
        value, _, _, _, _ = engine.loglik(vec[0], vec[1], max(vec[2], XI_FLOOR))
        return value

    k = 3
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k); ei[i] = steps[i]
            ej = np.zeros(k); ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                ll(theta + ei + ej) - ll(theta + ei - ej)
                - ll(theta - ei + ej) + ll(theta - ei - ej)
            ) / (4 * steps[i] * steps[j])
    try:
        diag = np.diag(np.linalg.inv(-hess))
        return np.sqrt(np.where(diag > 0, diag, np.nan))
    except np.linalg.LinAlgError:
        return np.full(k, np.nan)


def residuals(fit: FirmFit, factor_returns: np.ndarray, r: float) -> np.ndarray:
    """Idiosyncratic residuals w_hat = v - mu - loading*(x - r).

    The unobservable realized jump path enters at its compensated expectation
    (zero), so no jump term appears.
    """
    x = np.asarray(factor_returns, dtype=float)
    return fit.asset_returns - fit.params.mu - fit.params.loading * (x[1:] - r)
