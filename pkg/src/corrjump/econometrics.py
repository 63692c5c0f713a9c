"""Lead-lag and predictive-power tests on monthly measure series.

Granger causality: y is regressed on a constant and lags 1..k of itself and
of x; the joint nullity of the x lags is tested by a Wald statistic with a
Bartlett-kernel HAC covariance (Newey-West automatic bandwidth
floor(4*(T/100)^(2/9)), small-sample n/(n-p) correction), referred to an
F(k, n-p) distribution (the chi^2(k)/k approximation). Lag orders come from
the Schwarz criterion.

Predictive power: a restricted regression of the stress index on its own lags
and the benchmark measure's lags, then an unrestricted one adding the full
model's lags; both are fit on the common sample t = max_lag+1..T so the
models nest exactly and the R^2-based incremental F statistic

    F = [(R2_u - R2_r) / k3] / [(1 - R2_u) / (N - (k1+k2+k3) - 1)]

equals the usual nested-model RSS form identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DataError


@dataclass
class GCResult:
    direction: str
    lag: int
    stat: float
    pvalue: float
    robust: bool


@dataclass
class PredictiveResult:
    r2_restricted: float
    r2_unrestricted: float
    fstat: float
    pvalue: float
    k1: int
    k2: int
    k3: int
    n_obs: int


def first_difference(series: np.ndarray) -> np.ndarray:
    """Delta y_t = y_t - y_{t-1}; output is one shorter than the input."""
    y = np.asarray(series, dtype=float)
    if y.size < 2:
        raise DataError("first difference needs at least 2 observations")
    return np.diff(y)


def _lagged_design(y: np.ndarray, regressors: list[np.ndarray], lags: list[int], trim: int):
    """(target, X) on the common sample t = trim..T-1, constant first.

    ``lags[i]`` lags of regressors[i] enter; lags[0] applies to y itself when
    regressors[0] is y. Callers pass y as the first regressor.
    """
    n = y.size
    if trim >= n:
        raise DataError("not enough observations for the requested lag order")
    target = y[trim:]
    cols = [np.ones(n - trim)]
    for series, k in zip(regressors, lags):
        for lag in range(1, k + 1):
            cols.append(series[trim - lag : n - lag])
    return target, np.column_stack(cols)


def _ols(target: np.ndarray, X: np.ndarray):
    beta, _, _, _ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    return beta, resid


def _bic(target: np.ndarray, X: np.ndarray) -> float:
    n = target.size
    _, resid = _ols(target, X)
    rss = float(resid @ resid)
    if rss <= 0:
        rss = np.finfo(float).tiny
    return n * np.log(rss / n) + X.shape[1] * np.log(n)


def select_lag_bic(y: np.ndarray, regressors, max_lag: int) -> int:
    """Common lag order minimizing the BIC; ties break toward fewer lags.

    Every candidate is evaluated on the same sample (trimmed at ``max_lag``)
    so the criteria are comparable.
    """
    y = np.asarray(y, dtype=float)
    if max_lag < 1:
        raise DataError("max_lag must be at least 1")
    series = [y] + [np.asarray(r, dtype=float) for r in np.atleast_2d(regressors)]
    if y.size <= max_lag + len(series) * max_lag + 2:
        raise DataError("not enough observations for the requested max_lag")
    best_lag, best_bic = 1, np.inf
    for k in range(1, max_lag + 1):
        target, X = _lagged_design(y, series, [k] * len(series), max_lag)
        bic = _bic(target, X)
        if bic < best_bic:
            best_lag, best_bic = k, bic
    return best_lag


def _hac_cov(X: np.ndarray, resid: np.ndarray) -> np.ndarray:
    """Bartlett-kernel HAC covariance of the OLS coefficients."""
    n, p = X.shape
    g = X * resid[:, None]
    bandwidth = int(np.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))
    S = g.T @ g / n
    for lag in range(1, bandwidth + 1):
        w = 1.0 - lag / (bandwidth + 1.0)
        gamma = g[lag:].T @ g[:-lag] / n
        S += w * (gamma + gamma.T)
    S *= n / (n - p)
    xtx_inv = np.linalg.inv(X.T @ X)
    return n * xtx_inv @ S @ xtx_inv


def granger_test(y: np.ndarray, x: np.ndarray, lag: int, robust: bool = True,
                 direction: str = "x->y") -> GCResult:
    """Does x Granger-cause y at the given lag order?

    Wald test of the x-lag block; with ``robust`` the covariance is HAC,
    otherwise spherical. The statistic is Wald/k with an F(k, n-p) p-value.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.size != x.size:
        raise DataError("series must be aligned")
    if lag < 1:
        raise DataError("lag must be at least 1")
    target, X = _lagged_design(y, [y, x], [lag, lag], lag)
    n, p = X.shape
    if n <= p + 1:
        raise DataError("not enough observations for the requested lag")
    if np.linalg.matrix_rank(X) < p:
        raise DataError("collinear regressors (rank-deficient design)")
    beta, resid = _ols(target, X)
    if robust:
        cov = _hac_cov(X, resid) / n
    else:
        sigma2 = float(resid @ resid) / (n - p)
        cov = sigma2 * np.linalg.inv(X.T @ X)
    block = slice(1 + lag, 1 + 2 * lag)  # x lags follow the constant and y lags
    bx = beta[block]
    vx = cov[block, block]
    try:
        wald = float(bx @ np.linalg.solve(vx, bx))
    except np.linalg.LinAlgError as exc:
        raise DataError("singular covariance for the x-lag block") from exc
    stat = wald / lag
    pvalue = float(stats.f.sf(stat, lag, n - p))
    return GCResult(direction, lag, stat, pvalue, robust)


def predictive_regressions(
    stress: np.ndarray, benchmark_measure: np.ndarray, full_measure: np.ndarray,
    max_lag: int = 6,
) -> PredictiveResult:
    """Restricted vs unrestricted stress-index predictive regressions.

    (k1, k2) minimize the BIC of the restricted model over the grid; k3 then
    minimizes the BIC of the unrestricted model given (k1, k2). Both models
    are fit on the common sample so R^2 never decreases with the extra block.
    """
    y = np.asarray(stress, dtype=float)
    ben = np.asarray(benchmark_measure, dtype=float)
    fm = np.asarray(full_measure, dtype=float)
    if not (y.size == ben.size == fm.size):
        raise DataError("series must be aligned")
    if y.size <= 3 * max_lag + 5:
        raise DataError("not enough observations for predictive regressions")

    best = None
    for k1 in range(1, max_lag + 1):
        for k2 in range(1, max_lag + 1):
            target, X = _lagged_design(y, [y, ben], [k1, k2], max_lag)
            bic = _bic(target, X)
            if best is None or bic < best[0]:
                best = (bic, k1, k2)
    _, k1, k2 = best

    best3 = None
    for k3 in range(1, max_lag + 1):
        target, X = _lagged_design(y, [y, ben, fm], [k1, k2, k3], max_lag)
        bic = _bic(target, X)
        if best3 is None or bic < best3[0]:
            best3 = (bic, k3)
    _, k3 = best3

    target, Xr = _lagged_design(y, [y, ben], [k1, k2], max_lag)
    _, Xu = _lagged_design(y, [y, ben, fm], [k1, k2, k3], max_lag)
    _, resid_r = _ols(target, Xr)
    _, resid_u = _ols(target, Xu)
    tss = float(np.sum((target - target.mean()) ** 2))
    r2_r = 1.0 - float(resid_r @ resid_r) / tss
    r2_u = 1.0 - float(resid_u @ resid_u) / tss
    if r2_u < r2_r:  # numerically impossible for nested same-sample fits
        r2_u = r2_r
    result = PredictiveResult(r2_r, r2_u, np.nan, np.nan, k1, k2, k3, target.size)
    result.fstat, result.pvalue = incremental_f(result)
    return result


def incremental_f(result: PredictiveResult) -> tuple[float, float]:
    """R^2-based nested-model F statistic and its p-value.

    Degrees of freedom follow the printed bookkeeping: v1 = k1+k2+k3-(k1+k2)
    and v2 = N - (k1+k2+k3) - 1.
    """
    v1 = result.k1 + result.k2 + result.k3 - (result.k1 + result.k2)
    v2 = result.n_obs - (result.k1 + result.k2 + result.k3) - 1
    if v2 <= 0:
        raise DataError("non-positive residual degrees of freedom")
    gap = max(result.r2_unrestricted - result.r2_restricted, 0.0)
    denom = 1.0 - result.r2_unrestricted
    if denom <= 0:
        return float("inf"), 0.0
    fstat = (gap / v1) / (denom / v2)
    pvalue = float(stats.f.sf(fstat, v1, v2))
    return float(fstat), pvalue
