"""Correlated jump component: one shared Poisson clock, firm-specific marks.

Every firm shares the same arrival count N ~ Poisson(lam) per day; conditional
on k arrivals, firm j receives the sum of k independent N(a_j, b_j^2) marks.
The compensated per-day jump contribution to the log asset return is
Q_j N - a_j*lam (the mark mean E[Q_j] = a_j, so this is zero-mean).

Calibration matches sample excess kurtosis and co-skewness to the model's
closed-form cumulants. The paper's lineage does not print those formulas, so
they are stated here and gated by a brute-force compound-Poisson Monte Carlo
check in the test suite before anything downstream relies on them:

    Var(Q_j N)            = lam * (a_j^2 + b_j^2)
    cum(r_i, r_i, r_j)    = lam * (a_i^2 + b_i^2) * a_j           (i != j)
    cum3(r_j)             = lam * (a_j^3 + 3 a_j b_j^2)           (= lam E[Q^3])
    kappa4(r_j)           = lam * (a_j^4 + 6 a_j^2 b_j^2 + 3 b_j^4)

with excess kurtosis kappa4 / Var(r_j)^2 once the Gaussian diffusion variance
is added to the denominator (Gaussian parts contribute nothing above order 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DataError, EstimationError

VARIANCE_FLOOR = 1e-10  # per-day floor when backing out diffusion variance


@dataclass(frozen=True)
class JumpParams:
    """Shared intensity and per-firm mark distributions.

    ``lam`` is in jumps per day; ``a`` and ``b`` are arrays over firms
    (mean and standard deviation of the log jump size).
    """

    lam: float
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        if self.lam < 0:
            raise DataError("jump intensity must be non-negative")
        if np.any(self.b < 0):
            raise DataError("jump size volatility must be non-negative")
        if self.a.shape != self.b.shape:
            raise DataError("a and b must have equal length")

    @property
    def n_firms(self) -> int:
        return self.a.size

    @property
    def qbar(self) -> np.ndarray:
        """E[Q_j]; equals a_j because marks are Gaussian."""
        return self.a

    @property
    def bhat_sq(self) -> np.ndarray:
        """Second moment of a single mark, a_j^2 + b_j^2."""
        return self.a**2 + self.b**2

    def for_firm(self, j: int) -> "JumpParams":
        return JumpParams(self.lam, self.a[j : j + 1], self.b[j : j + 1])

    @staticmethod
    def none(n_firms: int) -> "JumpParams":
        """The benchmark (no-jump) parameter set."""
        return JumpParams(0.0, np.zeros(n_firms), np.zeros(n_firms))


@dataclass
class MomentTargets:
    """Per-firm excess kurtosis and ordered-pair co-skewness matrix.

    ``coskewness[i, j]`` holds E[(r_i - mean_i)^2 (r_j - mean_j)]; the
    diagonal is the firm's own third central moment.
    """

    excess_kurtosis: np.ndarray
    coskewness: np.ndarray


def sample_moments(returns: np.ndarray) -> MomentTargets:
    """Population (1/n) sample moments of a (n_days, n_firms) return matrix."""
    data = np.asarray(returns, dtype=float)
    if data.ndim != 2:
        raise DataError("returns must be a 2-d (n_days, n_firms) matrix")
    n, j = data.shape
    if n < 30:
        raise DataError(f"need at least 30 days of returns, got {n}")
    if j < 1:
        raise DataError("need at least one firm")
    centered = data - data.mean(axis=0)
    m2 = np.mean(centered**2, axis=0)
    if np.any(m2 <= 0):
        raise DataError("degenerate input: a firm has constant returns")
    m4 = np.mean(centered**4, axis=0)
    excess_kurtosis = m4 / m2**2 - 3.0
    coskewness = (centered**2).T @ centered / n
    return MomentTargets(excess_kurtosis, coskewness)


def model_moments(jp: JumpParams, diffusion_var: np.ndarray) -> MomentTargets:
    """Closed-form moments of diffusion-plus-shared-jump daily returns.

    ``diffusion_var`` is the per-firm Gaussian (non-jump) variance per day.
    See the module docstring for the cumulants and their MC validation gate.
    """
    dv = np.atleast_1d(np.asarray(diffusion_var, dtype=float))
    if np.any(dv <= 0):
        raise DataError("diffusion variance must be positive")
    lam, a, b = jp.lam, jp.a, jp.b
    m2 = jp.bhat_sq
    total_var = dv + lam * m2
    kappa4 = lam * (a**4 + 6 * a**2 * b**2 + 3 * b**4)
    excess_kurtosis = kappa4 / total_var**2
    coskewness = lam * np.outer(m2, a)
    np.fill_diagonal(coskewness, lam * (a**3 + 3 * a * b**2))
    return MomentTargets(excess_kurtosis, coskewness)


@dataclass
class JumpCalibration:
    params: JumpParams
    diffusion_var: np.ndarray
    objective: float
    sample: MomentTargets


def _residual_scales(sample: MomentTargets) -> tuple[float, float]:
    s_kurt = float(np.std(sample.excess_kurtosis))
    s_cosk = float(np.std(sample.coskewness))
    return (s_kurt if s_kurt > 0 else 1.0, s_cosk if s_cosk > 0 else 1.0)


def _calibration_residuals(x, sample_var, sample, s_kurt, s_cosk, n_firms):
    lam = x[0]
    a = x[1 : 1 + n_firms]
    b = x[1 + n_firms :]
    jp = JumpParams(max(lam, 0.0), a, np.abs(b))
    dv = np.maximum(sample_var - jp.lam * jp.bhat_sq, VARIANCE_FLOOR)
    model = model_moments(jp, dv)
    res_k = (model.excess_kurtosis - sample.excess_kurtosis) / s_kurt
    res_c = (model.coskewness - sample.coskewness).ravel() / s_cosk
    return np.concatenate([res_k, res_c])


def calibrate_jumps(returns: np.ndarray, seed: int = 0) -> JumpCalibration:
    """Fit (lam, a_j, b_j) by moment matching.

    Minimizes the RMSE over the union of normalized moment deviations (each
    metric standardized by the cross-sectional std of its sample values),
    with lam >= 0 and b_j >= 0 enforced by bounds, multi-started. The
    diffusion variance is backed out residually as
    max(sample variance - lam*(a^2+b^2), floor).
    """
    data = np.asarray(returns, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise DataError("calibration needs at least 2 firms")
    if data.shape[0] < 60:
        raise DataError(f"calibration needs at least 60 days, got {data.shape[0]}")
    n_firms = data.shape[1]
    sample = sample_moments(data)
    sample_var = np.var(data, axis=0)
    s_kurt, s_cosk = _residual_scales(sample)

    mean_cosk = (sample.coskewness.sum(axis=0) - np.diag(sample.coskewness)) / max(n_firms - 1, 1)
    lower = np.concatenate([[0.0], np.full(n_firms, -np.inf), np.zeros(n_firms)])
    upper = np.full(1 + 2 * n_firms, np.inf)

    best = None
    for lam0 in (0.02, 0.1, 0.3):
        a0 = np.sign(mean_cosk) * np.maximum(
            np.cbrt(np.abs(mean_cosk) / max(lam0, 1e-6)), 1e-3
        )
        # kappa4 ~ 3*lam*b^4 when |a| is small
        kurt = np.maximum(sample.excess_kurtosis, 0.0) * sample_var**2
        b0 = np.maximum((kurt / (3.0 * lam0)) ** 0.25, 1e-3)
        x0 = np.concatenate([[lam0], a0, b0])
        try:
            res = least_squares(
                _calibration_residuals,
                x0,
                args=(sample_var, sample, s_kurt, s_cosk, n_firms),
                bounds=(lower, upper),
                xtol=1e-12,
                ftol=1e-12,
                gtol=1e-12,
                max_nfev=4000,
            )
        except Exception as exc:  # pragma: no cover - optimizer internals
            raise EstimationError(f"jump calibration failed: {exc}", best=best) from exc
        if best is None or res.cost < best.cost:
            best = res

    if best is None or not np.all(np.isfinite(best.x)):
        raise EstimationError("jump calibration produced no finite iterate", best=best)
    lam = max(float(best.x[0]), 0.0)
    a = best.x[1 : 1 + n_firms]
    b = np.abs(best.x[1 + n_firms :])
    params = JumpParams(lam, a, b)
    dv = np.maximum(sample_var - params.lam * params.bhat_sq, VARIANCE_FLOOR)
    rmse = float(np.sqrt(np.mean(best.fun**2)))
    return JumpCalibration(params, dv, rmse, sample)


def jump_mgf(phi, lam: float, a: float, b: float, tau: float):
    """E_t[exp(phi * Q_j N(T))] for horizon tau days (closed form).

    exp(lam * tau * (exp(a*phi + b^2 phi^2 / 2) - 1)); exact for any complex
    phi, and identically 1 when lam = 0 or phi = 0.
    """
    if tau < 0:
        raise DataError("tau must be non-negative")
    return np.exp(lam * tau * (np.exp(a * phi + 0.5 * b**2 * phi**2) - 1.0))


def simulate_jumps(jp: JumpParams, horizon_days: int, n_paths: int, rng):
    """Draw shared arrivals and compensated per-firm jump sums.

    Returns ``(counts, compensated)`` with shapes (n_paths, horizon) and
    (n_paths, horizon, n_firms). One Poisson count per (path, day) is shared
    by every firm; conditional on k arrivals firm j's mark sum is drawn as
    N(k a_j, k b_j^2), the exact law of a sum of k independent marks. The
    output subtracts the compensator a_j * lam.
    """
    from .rng import substream as _sub

    if isinstance(rng, (int, np.integer)):
        rng = _sub(int(rng), "simulate_jumps")
    counts = rng.poisson(jp.lam, size=(n_paths, horizon_days))
    z = rng.standard_normal((n_paths, horizon_days, jp.n_firms))
    k = counts[:, :, None].astype(float)
    compensated = k * jp.a + np.sqrt(k) * jp.b * z - jp.a * jp.lam
    return counts, compensated
