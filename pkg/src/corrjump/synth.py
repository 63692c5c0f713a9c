"""Synthetic equity/fundamentals/rate panels with known ground truth.

Simulates the full data-generating process: GARCH common factor, shared
Poisson jumps with firm-specific marks (optionally regime-switching intensity
and mean), Gaussian idiosyncratic noise, asset paths, and equity priced
day-by-day through the structural pricing engine. Panels are emitted in the
ingestion schemas so the whole pipeline can be validated end to end against
the generator's truth record. Deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .common_factor import HNParams
from .errors import ConfigError
from .firm_mle import FirmParams
from .jumps import JumpParams
from .market_data import EquityPanel, FundamentalsPanel, RateSeries, write_csv
from .pricing import PricingContext, PricingKernel, QuadratureSpec
from .rng import substream

_PRICE_FLOOR = 1e-12


@dataclass(frozen=True)
class RegimeSegment:
    """Jump regime over trading days [start, end): intensity and mark-mean scale."""

    start: int
    end: int
    lam: float
    a_scale: float = 1.0


@dataclass
class SynthConfig:
    """Ground-truth specification of a synthetic market.

    The calendar is built month by month (``days_per_month`` business days
    per calendar month, ``n_months`` months from ``start``); regime segments
    must partition [0, n_days). Debt is constant per firm at
    ``debt_ratio * initial_assets`` and fundamentals are backdated so the
    reporting lag leaves them in effect from day one.
    """

    hn: HNParams
    jumps: JumpParams
    firms: list[FirmParams]
    n_months: int = 14
    days_per_month: int = 21
    start: str = "1996-01-01"
    annual_rate: float = 0.03
    initial_assets: float | np.ndarray = 100.0e6
    debt_ratio: float | np.ndarray = 0.5
    shares: float = 1.0e6
    sector: str = "depositories"
    maturity_days: int = 252
    regimes: list[RegimeSegment] = field(default_factory=list)
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    seed: int = 0

    @property
    def n_firms(self) -> int:
        return len(self.firms)

    @property
    def n_days(self) -> int:
        return self.n_months * self.days_per_month

    def validate(self) -> None:
        if self.n_firms < 1:
            raise ConfigError("need at least one firm")
        if self.n_months < 1 or self.days_per_month < 1:
            raise ConfigError("calendar must be non-empty")
        self_hn = self.hn
        if self_hn.omega < 0 or self_hn.alpha < 0 or self_hn.persistence >= 1:
            raise ConfigError("common-factor parameters are not stationary")
        if self_hn.unconditional_variance <= 0:
            raise ConfigError("common-factor variance must be positive")
        for fp in self.firms:
            if fp.xi <= 0:
                raise ConfigError("idiosyncratic variances must be positive")
        if self.jumps.n_firms != self.n_firms:
            raise ConfigError("jump parameters must cover every firm")
        segments = self.segments()
        edges = [(s.start, s.end) for s in segments]
        if edges[0][0] != 0 or edges[-1][1] != self.n_days:
            raise ConfigError("regime segments must partition [0, n_days)")
        for (a, b), (c, _) in zip(edges, edges[1:]):
            if b != c or a >= b:
                raise ConfigError("regime segments must partition [0, n_days)")
        if np.any(np.asarray(self.debt_ratio) < 0) or np.any(np.asarray(self.debt_ratio) >= 1):
            raise ConfigError("debt_ratio must lie in [0, 1)")
        for seg in segments:
            if seg.lam < 0:
                raise ConfigError("segment intensity must be non-negative")

    def segments(self) -> list[RegimeSegment]:
        if self.regimes:
            return sorted(self.regimes, key=lambda s: s.start)
        return [RegimeSegment(0, self.n_days, self.jumps.lam, 1.0)]


@dataclass
class SynthTruth:
    """Everything the generator knows, for round-trip and recovery tests."""

    config: SynthConfig
    dates: pd.DatetimeIndex
    r_day: float
    factor_returns: np.ndarray
    factor_variance: np.ndarray  # h_t for each day
    h_state: np.ndarray  # h_{t+1} known on day t
    assets: np.ndarray  # (n_days, n_firms)
    equity: np.ndarray  # (n_days, n_firms)
    debt: np.ndarray  # (n_firms,)
    firm_ids: list[str]


def synth_calendar(start: str, n_months: int, days_per_month: int) -> pd.DatetimeIndex:
    """First ``days_per_month`` business days of ``n_months`` months."""
    anchor = pd.Timestamp(start).to_period("M")
    days = []
    for m in range(n_months):
        period = anchor + m
        bdays = pd.bdate_range(period.start_time, period.end_time)
        days.extend(bdays[:days_per_month])
    return pd.DatetimeIndex(days)


def synth_market(config: SynthConfig):
    """Generate (EquityPanel, FundamentalsPanel, RateSeries, SynthTruth)."""
    config.validate()
    n_days, n_firms = config.n_days, config.n_firms
    dates = synth_calendar(config.start, config.n_months, config.days_per_month)
    r = config.annual_rate / 252.0
    hn = config.hn

    rng_factor = substream(config.seed, "synth", "factor")
    rng_count = substream(config.seed, "synth", "jumpcount")
    rng_mark = substream(config.seed, "synth", "jumpmark")
    rng_idio = substream(config.seed, "synth", "idio")

    # factor path and its variance filter states
    omega, alpha, eta, gamma, lam_p = hn.omega, hn.alpha, hn.eta, hn.gamma, hn.lam
    x = np.empty(n_days)
    h = np.empty(n_days + 1)
    h[0] = hn.unconditional_variance
    for t in range(n_days):
        eps = rng_factor.standard_normal()
        x[t] = r + lam_p * h[t] + np.sqrt(h[t]) * eps
        h[t + 1] = omega + alpha * (eps - gamma * np.sqrt(h[t])) ** 2 + eta * h[t]
    h_days, h_state = h[:-1], h[1:]

    # per-day regime parameters
    lam_t = np.empty(n_days)
    a_scale_t = np.empty(n_days)
    for seg in config.segments():
        lam_t[seg.start : seg.end] = seg.lam
        a_scale_t[seg.start : seg.end] = seg.a_scale

    counts = rng_count.poisson(lam_t)
    marks = rng_mark.standard_normal((n_days, n_firms))
    a = config.jumps.a * a_scale_t[:, None]
    k = counts[:, None].astype(float)
    jump_comp = k * a + np.sqrt(k) * config.jumps.b * marks - a * lam_t[:, None]

    xi = np.array([fp.xi for fp in config.firms])
    mu = np.array([fp.mu for fp in config.firms])
    loading = np.array([fp.loading for fp in config.firms])
    idio = rng_idio.standard_normal((n_days, n_firms)) * np.sqrt(xi)

    v = mu + loading * (x[:, None] - r) + idio + jump_comp
    assets0 = np.broadcast_to(np.asarray(config.initial_assets, dtype=float), (n_firms,))
    assets = assets0 * np.exp(np.cumsum(v, axis=0))
    debt = assets0 * np.broadcast_to(np.asarray(config.debt_ratio, dtype=float), (n_firms,))

    # equity: price each day with the regime-active jump parameters
    equity = np.empty((n_days, n_firms))
    for j in range(n_firms):
        for seg in config.segments():
            ctx = PricingContext(
                factor=hn, loading=loading[j], xi=xi[j], jump_lam=seg.lam,
                jump_mean=float(config.jumps.a[j]) * seg.a_scale,
                jump_vol=float(config.jumps.b[j]), r=r, tau=config.maturity_days,
                h_next=float(h_state[seg.start]), debt=float(debt[j]),
            )
            kernel = PricingKernel(ctx, config.quad)
            sl = slice(seg.start, seg.end)
            price, _ = kernel.price_delta(assets[sl, j], debt[j], h_state[sl])
            equity[sl, j] = np.maximum(price, _PRICE_FLOOR)

    firm_ids = [f"F{j:03d}" for j in range(n_firms)]
    truth = SynthTruth(
        config=config, dates=dates, r_day=r, factor_returns=x,
        factor_variance=h_days, h_state=h_state, assets=assets,
        equity=equity, debt=debt, firm_ids=firm_ids,
    )

    eq_rows = []
    for j, firm in enumerate(firm_ids):
        for t, d in enumerate(dates):
            eq_rows.append((d, firm, equity[t, j] / config.shares, config.shares))
    eq = pd.DataFrame(eq_rows, columns=["date", "firm_id", "price", "shares_outstanding"])
    eq = eq.sort_values(["firm_id", "date"], kind="mergesort").reset_index(drop=True)
    eq["log_return"] = np.log(eq["price"]).groupby(eq["firm_id"]).diff()

    # quarterly reports, backdated 3 months so the lag lands them on day one
    report_dates = pd.date_range(
        end=dates[-1], start=dates[0] - pd.DateOffset(months=18), freq="QE"
    )
    fu_rows = []
    for j, firm in enumerate(firm_ids):
        for d in report_dates:
            fu_rows.append(
                (d, firm, debt[j], 0.5 * debt[j], assets0[j], assets0[j] - debt[j])
            )
    fu = pd.DataFrame(
        fu_rows,
        columns=[
            "report_date", "firm_id", "long_term_debt", "short_term_debt",
            "book_assets", "book_equity",
        ],
    ).sort_values(["firm_id", "report_date"], kind="mergesort").reset_index(drop=True)

    ra = pd.DataFrame({"date": dates, "annual_rate": config.annual_rate})
    return EquityPanel(eq), FundamentalsPanel(fu), RateSeries(ra), truth


def write_panels(out_dir, equity: EquityPanel, fundamentals: FundamentalsPanel,
                 rates: RateSeries, truth: SynthTruth) -> dict[str, str]:
    """Write the four ingestion CSVs plus the factor series; returns paths."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "equity": str(out / "equity.csv"),
        "fundamentals": str(out / "fundamentals.csv"),
        "rates": str(out / "rates.csv"),
        "sectors": str(out / "sectors.csv"),
        "factor": str(out / "factor.csv"),
    }
    write_csv(
        paths["equity"],
        ["date", "firm_id", "price", "shares_outstanding"],
        (
            (row.date.date().isoformat(), row.firm_id, float(row.price),
             float(row.shares_outstanding))
            for row in equity.frame.itertuples()
        ),
    )
    write_csv(
        paths["fundamentals"],
        ["report_date", "firm_id", "long_term_debt", "short_term_debt",
         "book_assets", "book_equity"],
        (
            (row.report_date.date().isoformat(), row.firm_id, float(row.long_term_debt),
             float(row.short_term_debt), float(row.book_assets), float(row.book_equity))
            for row in fundamentals.frame.itertuples()
        ),
    )
    write_csv(
        paths["rates"],
        ["date", "annual_rate"],
        (
            (row.date.date().isoformat(), float(row.annual_rate))
            for row in rates.frame.itertuples()
        ),
    )
    write_csv(
        paths["sectors"],
        ["firm_id", "sector"],
        ((firm, truth.config.sector) for firm in truth.firm_ids),
    )
    write_csv(
        paths["factor"],
        ["date", "log_return"],
        (
            (d.date().isoformat(), float(x))
            for d, x in zip(truth.dates, truth.factor_returns)
        ),
    )
    return paths
