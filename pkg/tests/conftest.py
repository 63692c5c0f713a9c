"""Shared fixtures: closed-form oracles and heavy simulation-recovery runs.

Session-scoped fixtures hold the expensive artifacts (20k-day GARCH fit,
1000-day firm MLE, 5000-day jump calibration and DCC recovery, the
regime-switching rolling run) so the module tests and the acceptance gate
compute each of them once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from corrjump.common_factor import HNParams, fit_hn_garch, hn_filter, simulate_factor
from corrjump.correlation import fit_dcc
from corrjump.firm_mle import FirmParams, fit_firm
from corrjump.jumps import JumpParams, calibrate_jumps, simulate_jumps
from corrjump.pricing import PricingContext, PricingKernel, QuadratureSpec
from corrjump.rng import substream
from corrjump.risk_engine import SimConfig, rolling_run
from corrjump.synth import RegimeSegment, SynthConfig, synth_market


# ---------------------------------------------------------------- oracles


def bs_call(spot, strike, maturity, rate, vol):
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol**2) * maturity) / (vol * np.sqrt(maturity))
    d2 = d1 - vol * np.sqrt(maturity)
    return spot * norm.cdf(d1) - strike * np.exp(-rate * maturity) * norm.cdf(d2)


def bs_put(spot, strike, maturity, rate, vol):
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol**2) * maturity) / (vol * np.sqrt(maturity))
    d2 = d1 - vol * np.sqrt(maturity)
    return strike * np.exp(-rate * maturity) * norm.cdf(-d2) - spot * norm.cdf(-d1)


def bs_delta(spot, strike, maturity, rate, vol):
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol**2) * maturity) / (vol * np.sqrt(maturity))
    return norm.cdf(d1)


HN_TEST = HNParams(omega=1e-6, alpha=2e-6, eta=0.85, gamma=100.0, lam=2.0)


def collapsed_context(vol=0.2, rate=0.0, debt=80.0, tau=252):
    """PricingContext for the delta=0, lam=0 lognormal collapse."""
    return PricingContext(
        factor=HN_TEST, loading=0.0, xi=vol**2 / 252.0, jump_lam=0.0,
        jump_mean=0.0, jump_vol=0.0, r=rate / 252.0, tau=tau,
        h_next=1e-4, debt=debt,
    )


def jump_context(debt=50.0, loading=0.6, xi=1.5e-4, lam=0.08, a=-0.03, b=0.05,
    rate_day=0.05 / 252, tau=30, h_next=1.2e-4):
    return PricingContext(
        factor=HN_TEST, loading=loading, xi=xi, jump_lam=lam, jump_mean=a,
        jump_vol=b, r=rate_day, tau=tau, h_next=h_next, debt=debt,
    )


def simulate_asset_terminal(ctx: PricingContext, value, n, rng, risk_neutral=True):
    """Brute-force draw of V_T under the pricing dynamics (oracle for gf/parity)."""
    params = ctx.factor if not risk_neutral else None
    from corrjump.common_factor import to_risk_neutral

    params = to_risk_neutral(ctx.factor) if risk_neutral else ctx.factor
    x, _ = simulate_factor(params, ctx.r, ctx.h_next, ctx.tau, n, rng)
    log_x = x.sum(axis=1)
    _, comp = simulate_jumps(
        JumpParams(ctx.jump_lam, [ctx.jump_mean], [ctx.jump_vol]), ctx.tau, n, rng
    )
    jumps = comp[:, :, 0].sum(axis=1) + ctx.jump_mean * ctx.jump_lam * ctx.tau
    noise = rng.standard_normal(n) * np.sqrt(ctx.xi * ctx.tau)
    log_v = np.log(value) + ctx.drift * ctx.tau + ctx.loading * log_x + noise + jumps
    return np.exp(log_v)


# ------------------------------------------------------- recovery fixtures


@dataclass
class HNRecovery:
    true: HNParams
    fit: object


@pytest.fixture(scope="session")
def hn_recovery() -> HNRecovery:
    true = HNParams(omega=1e-6, alpha=2e-6, eta=0.85, gamma=100.0, lam=2.0)
    r = 0.03 / 252
    x, _ = simulate_factor(true, r, true.unconditional_variance, 20_000, 1, substream(11, "hn"))
    return HNRecovery(true, fit_hn_garch(x[0], r, restarts=3, seed=5))


@dataclass
class FirmRecovery:
    true: FirmParams
    jumps: JumpParams
    hn: HNParams
    r: float
    equity: np.ndarray
    debt: np.ndarray
    x: np.ndarray
    h: np.ndarray
    h_next: float
    assets_true: np.ndarray
    fit: object
    fit_benchmark: object


@pytest.fixture(scope="session")
def firm_recovery() -> FirmRecovery:
    hn = HN_TEST
    r = 0.03 / 252
    true = FirmParams(mu=4e-4, loading=0.6, xi=2e-4)
    jp = JumpParams(0.08, [-0.03], [0.05])
    n = 1000
    rng = substream(3, "firm")
    x, _ = simulate_factor(hn, r, hn.unconditional_variance, n, 1, rng)
    x = x[0]
    _, comp = simulate_jumps(jp, n, 1, rng)
    noise = rng.standard_normal(n) * np.sqrt(true.xi)
    v = true.mu + true.loading * (x - r) + noise + comp[0, :, 0]
    assets = 100.0 * np.exp(np.cumsum(v))
    h, _, _, h_next = hn_filter(hn, x, r)
    h_state = np.append(h[1:], h_next)
    debt = np.full(n, 60.0)
    ctx = PricingContext(
        factor=hn, loading=true.loading, xi=true.xi, jump_lam=jp.lam,
        jump_mean=float(jp.a[0]), jump_vol=float(jp.b[0]), r=r, tau=252,
        h_next=float(h_state[-1]), debt=60.0,
    )
    equity, _ = PricingKernel(ctx, QuadratureSpec()).price_delta(assets, debt, h_state)
    fit = fit_firm(
        equity, debt, x, r, hn, jp, factor_variance=h, h_next=float(h_next),
        compute_stderr=True,
    )
    fit_ben = fit_firm(
        equity, debt, x, r, hn, jp, benchmark=True, factor_variance=h,
        h_next=float(h_next),
    )
    return FirmRecovery(
        true, jp, hn, r, equity, debt, x, h, float(h_next), assets, fit, fit_ben
    )


@dataclass
class JumpRecovery:
    true: JumpParams
    diffusion_vol: float
    returns: np.ndarray
    calibration: object


@pytest.fixture(scope="session")
def jump_recovery() -> JumpRecovery:
    rng = substream(17, "jumps")
    n_days, n_firms = 5000, 10
    lam = 0.1
    a = np.where(np.arange(n_firms) % 2 == 0, -0.05, 0.04)
    b = np.full(n_firms, 0.05)
    true = JumpParams(lam, a, b)
    _, comp = simulate_jumps(true, n_days, 1, rng)
    sigma = 0.015
    returns = rng.standard_normal((n_days, n_firms)) * sigma + comp[0]
    return JumpRecovery(true, sigma, returns, calibrate_jumps(returns, seed=1))


@dataclass
class DCCRecovery:
    a: float
    b: float
    rbar: np.ndarray
    residuals: np.ndarray
    fit: object


@pytest.fixture(scope="session")
def dcc_recovery() -> DCCRecovery:
    rng = substream(21, "dccsim")
    j, n = 5, 5000
    rbar = np.full((j, j), 0.3)
    np.fill_diagonal(rbar, 1.0)
    a, b = 0.05, 0.90
    q = rbar.copy()
    z = np.empty((n, j))
    for t in range(n):
        d = 1.0 / np.sqrt(np.diag(q))
        corr = q * np.outer(d, d)
        z[t] = np.linalg.cholesky(corr) @ rng.standard_normal(j)
        q = (1 - a - b) * rbar + a * np.outer(z[t], z[t]) + b * q
    residuals = z * np.array([0.010, 0.020, 0.015, 0.012, 0.030])
    return DCCRecovery(a, b, rbar, residuals, fit_dcc(residuals))


# ----------------------------------------------------- synthetic pipelines


def small_synth_config(seed=42, n_months=13, regimes=(), days_per_month=10):
    n = 10
    hn = HNParams(1e-6, 4e-6, 0.85, 150.0, 2.0)
    spread = np.linspace(0.85, 1.15, n)
    firms = [FirmParams(3e-4, 0.9 * s, 2e-4 / s) for s in spread]
    jumps = JumpParams(0.05, np.full(n, -0.02), np.full(n, 0.04))
    return SynthConfig(
        hn=hn, jumps=jumps, firms=firms, n_months=n_months,
        days_per_month=days_per_month, initial_assets=np.linspace(2e8, 8e7, n),
        debt_ratio=0.55, seed=seed, regimes=list(regimes),
    )


@pytest.fixture(scope="session")
def small_synth():
    config = small_synth_config()
    equity, fundamentals, rates, truth = synth_market(config)
    return config, equity, fundamentals, rates, truth


@dataclass
class RegimeRun:
    truth: object
    rows: list
    estimates: list
    calm_months: set
    crisis_months: set


@pytest.fixture(scope="session")
def regime_run() -> RegimeRun:
    """Criterion-8 panel: 35 months, calm / crisis (lam x3, a more negative) / calm."""
    dpm = 10
    config = small_synth_config(
        seed=99, n_months=35,
        regimes=(
            RegimeSegment(0, 18 * dpm, 0.03, 1.0),
            RegimeSegment(18 * dpm, 30 * dpm, 0.09, 3.0),
            RegimeSegment(30 * dpm, 35 * dpm, 0.03, 1.0),
        ),
    )
    equity, fundamentals, rates, truth = synth_market(config)
    sector_map = {f: config.sector for f in truth.firm_ids}
    cfg = SimConfig(n_paths=2000, seed=5, workers=2, mle_xatol=1e-4)
    rows, estimates = rolling_run(
        equity, fundamentals, rates, sector_map, [config.sector], cfg
    )
    start = pd.Period("1996-01", "M")
    calm = {start + k for k in range(11, 18)}  # windows fully inside the calm segment
    crisis = {start + k for k in range(24, 30)}  # windows mostly inside the crisis
    return RegimeRun(truth, rows, estimates, calm, crisis)
