"""Monte Carlo systemic-risk measures on monthly rolling windows.

For each month end, a one-year window of aligned firm data is estimated in
three steps (common-factor GARCH, jump moment matching, per-firm structural
MLE), DCC is fit to the idiosyncratic residuals, and joint asset paths are
simulated forward six months under the physical measure: common-factor draws,
one shared Poisson jump clock with firm-specific marks, and multivariate
normal idiosyncratic shocks with the window-end covariance. Debt faces grow
at the risk-free rate over the horizon.

Measures per sector universe (ten firms):

- DD: per firm, pool ln(V) - ln(D) over simulated cells (all (path, day)
  cells by default, terminal day optionally) and take mean/std; sector value
  is the book-asset-weighted mean. Lower means riskier.
- NoD: expected number of firms whose asset value falls below debt at any
  simulated day (first passage on the daily grid).
- PIR: sector put value e^{-r h} E[max(D_h - V_h, 0)] summed over firms,
  divided by sector book assets, scaled by 1e6.

The benchmark variant re-estimates the firm parameters with the jump
component forced to zero and simulates without jumps; at lam = 0 the two
model paths consume identical random numbers and coincide bitwise.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .common_factor import HNParams, fit_hn_garch, simulate_factor
from .correlation import fit_dcc, psd_factor
from .errors import CorrjumpError, CoverageError, DataError
from .firm_mle import FirmParams, fit_firm
from .jumps import JumpParams, calibrate_jumps
from .market_data import (
    EquityPanel,
    FirmSeries,
    FundamentalsPanel,
    RateSeries,
    build_firm_series,
    select_top10,
)
from .pricing import QuadratureSpec
from .rng import substream

HORIZON_DAYS = 126  # six months
MATURITY_DAYS = 252  # one year


@dataclass(frozen=True)
class SimConfig:
    """Simulation and estimation knobs for a measure run."""

    n_paths: int = 10_000
    horizon_days: int = HORIZON_DAYS
    maturity_days: int = MATURITY_DAYS
    seed: int = 0
    quad: QuadratureSpec = field(default_factory=QuadratureSpec)
    dd_pooling: str = "all"  # "all" pools every (path, day) cell; "terminal" only day h
    workers: int = 1
    chunk_paths: int = 4096
    hn_restarts: int = 3
    mle_xatol: float = 1e-4

    def __post_init__(self):
        if self.n_paths < 1 or self.horizon_days < 1:
            raise DataError("n_paths and horizon_days must be at least 1")
        if self.dd_pooling not in ("all", "terminal"):
            raise DataError("dd_pooling must be 'all' or 'terminal'")


@dataclass
class ModelEstimates:
    """Per-model (full or benchmark) window estimation output."""

    firm_params: list[FirmParams]
    v_end: np.ndarray
    omega_end: np.ndarray
    dcc_a: float
    dcc_b: float
    logliks: np.ndarray


@dataclass
class WindowEstimates:
    """Everything one window's simulation needs, fully serializable."""

    month_end: pd.Timestamp
    sector: str
    firm_ids: list[str]
    r: float
    hn: HNParams
    h_next: float
    jumps: JumpParams
    debt_end: np.ndarray
    book_assets: np.ndarray
    full: ModelEstimates | None
    benchmark: ModelEstimates

    def model(self, which: str) -> ModelEstimates:
        if which == "full":
            if self.full is None:
                raise DataError("window was estimated benchmark-only")
            return self.full
        if which == "benchmark":
            return self.benchmark
        raise DataError(f"unknown model {which!r}")


@dataclass
class MeasureRow:
    month_end: pd.Timestamp
    sector: str
    dd: float
    nod: float
    pir: float
    dd_ben: float
    nod_ben: float
    pir_ben: float
    flag: str = ""


@dataclass
class SimPaths:
    """Simulated joint log asset values and the deterministic debt path."""

    log_assets: np.ndarray  # (n_paths, horizon, n_firms)
    log_debt: np.ndarray  # (horizon, n_firms)


def _sim_labels(we: WindowEstimates, cfg: SimConfig, chunk: int):
    # no model tag: full and benchmark share draws (common random numbers,
    # and bitwise nesting at lam = 0)
    return (cfg.seed, "sim", we.sector, we.month_end.date().isoformat(), chunk)


def simulate_assets(
    we: WindowEstimates, cfg: SimConfig, model: str = "full",
    n_paths: int | None = None, chunk: int = 0,
) -> SimPaths:
    """Simulate ``n_paths`` joint asset paths from the window-end state."""
    me = we.model(model)
    jumps = we.jumps if model == "full" else JumpParams.none(len(we.firm_ids))
    n = cfg.n_paths if n_paths is None else n_paths
    horizon = cfg.horizon_days
    labels = _sim_labels(we, cfg, chunk)

    x, _ = simulate_factor(
        we.hn, we.r, we.h_next, horizon, n, substream(*labels, "factor")
    )
    counts = substream(*labels, "jumpcount").poisson(jumps.lam, size=(n, horizon))
    marks = substream(*labels, "jumpmark").standard_normal((n, horizon, jumps.n_firms))
    k = counts[:, :, None].astype(float)
    jump_comp = k * jumps.a + np.sqrt(k) * jumps.b * marks - jumps.a * jumps.lam
    z = substream(*labels, "idio").standard_normal((n, horizon, len(we.firm_ids)))
    shocks = z @ psd_factor(me.omega_end).T

    mu = np.array([p.mu for p in me.firm_params])
    loading = np.array([p.loading for p in me.firm_params])
    v = mu + loading * (x - we.r)[:, :, None] + shocks + jump_comp
    log_assets = np.log(me.v_end) + np.cumsum(v, axis=1)
    log_debt = np.log(we.debt_end)[None, :] + we.r * np.arange(1, horizon + 1)[:, None]
    return SimPaths(log_assets, log_debt)


def dd_measure(
    log_assets: np.ndarray, log_debt: np.ndarray, book_assets: np.ndarray,
    pooling: str = "all",
) -> float:
    """Book-asset-weighted distance to default from pooled simulated cells."""
    gap = log_assets - log_debt[None, :, :]
    if pooling == "terminal":
        gap = gap[:, -1:, :]
    mean = gap.mean(axis=(0, 1))
    std = gap.std(axis=(0, 1))
    dd_firm = _safe_ratio(mean, std)
    weights = np.asarray(book_assets, dtype=float)
    weights = weights / weights.sum()
    return float(weights @ dd_firm)


def _safe_ratio(mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    out = np.empty_like(mean)
    ok = std > 0
    out[ok] = mean[ok] / std[ok]
    out[~ok] = np.where(mean[~ok] > 0, np.inf, np.where(mean[~ok] < 0, -np.inf, np.nan))
    return out


def nod_measure(log_assets: np.ndarray, log_debt: np.ndarray) -> float:
    """Mean over paths of the number of firms breaching debt at any day."""
    defaulted = (log_assets < log_debt[None, :, :]).any(axis=1)
    return float(defaulted.sum(axis=1).mean())


def pir_measure(
    assets_h: np.ndarray, debt_h: np.ndarray, book_assets: np.ndarray,
    r: float, horizon_days: int,
) -> float:
    """Price-of-insurance ratio at the horizon, scaled by 1e6.

    ``assets_h`` is (n_paths, n_firms) terminal asset values; ``debt_h`` the
    terminal debt faces.
    """
    shortfall = np.maximum(debt_h[None, :] - assets_h, 0.0)
    pi = np.exp(-r * horizon_days) * shortfall.mean(axis=0)
    return float(pi.sum() / np.asarray(book_assets, dtype=float).sum() * 1e6)


def compute_measures(we: WindowEstimates, cfg: SimConfig, model: str) -> dict[str, float]:
    """DD/NoD/PIR for one window and model, streaming fixed-size path chunks."""
    j = len(we.firm_ids)
    gap_sum = np.zeros(j)
    gap_sq = np.zeros(j)
    cells = 0
    default_total = 0.0
    shortfall_sum = np.zeros(j)
    n_done = 0
    chunk = 0
    while n_done < cfg.n_paths:
        n = min(cfg.chunk_paths, cfg.n_paths - n_done)
        paths = simulate_assets(we, cfg, model, n_paths=n, chunk=chunk)
        gap = paths.log_assets - paths.log_debt[None, :, :]
        pooled = gap if cfg.dd_pooling == "all" else gap[:, -1:, :]
        gap_sum += pooled.sum(axis=(0, 1))
        gap_sq += (pooled**2).sum(axis=(0, 1))
        cells += pooled.shape[0] * pooled.shape[1]
        default_total += (gap < 0).any(axis=1).sum()
        shortfall_sum += np.maximum(
            np.exp(paths.log_debt[-1])[None, :] - np.exp(paths.log_assets[:, -1, :]), 0.0
        ).sum(axis=0)
        n_done += n
        chunk += 1
    mean = gap_sum / cells
    var = np.maximum(gap_sq / cells - mean**2, 0.0)
    dd_firm = _safe_ratio(mean, np.sqrt(var))
    weights = we.book_assets / we.book_assets.sum()
    pi = np.exp(-we.r * cfg.horizon_days) * shortfall_sum / cfg.n_paths
    return {
        "dd": float(weights @ dd_firm),
        "nod": float(default_total / cfg.n_paths),
        "pir": float(pi.sum() / we.book_assets.sum() * 1e6),
    }


def value_weighted_factor(equity: EquityPanel) -> pd.Series:
    """Market-equity-weighted mean of firm log returns (previous-day weights).

    Fallback common factor when no external index series is supplied.
    """
    frame = equity.frame
    value = (frame["price"] * frame["shares_outstanding"]).rename("value")
    wide_v = pd.pivot_table(
        frame.assign(value=value), values="value", index="date", columns="firm_id"
    )
    wide_r = frame.pivot(index="date", columns="firm_id", values="log_return")
    lagged = wide_v.shift(1)
    weights = lagged.where(wide_r.notna())
    weights = weights.div(weights.sum(axis=1), axis=0)
    out = (weights * wide_r).sum(axis=1, min_count=1)
    return out.dropna()


def month_ends(calendar: pd.DatetimeIndex) -> pd.DatetimeIndex:
    frame = pd.Series(calendar, index=calendar)
    return pd.DatetimeIndex(frame.groupby(calendar.to_period("M")).max().values)


def window_start(calendar: pd.DatetimeIndex, month_end: pd.Timestamp):
    """First trading day of the month 11 months before ``month_end``.

    Returns None unless all 12 window months have trading days.
    """
    periods = calendar.to_period("M")
    end_period = pd.Timestamp(month_end).to_period("M")
    want = [end_period - k for k in range(11, -1, -1)]
    if not all((periods == p).any() for p in want):
        return None
    return calendar[periods == want[0]][0]


def feasible_month_ends(
    calendar: pd.DatetimeIndex, first_month=None, last_month=None
) -> list[pd.Timestamp]:
    """Month ends with a full 12-month window behind them, range-filtered."""
    ends = [m for m in month_ends(calendar) if window_start(calendar, m) is not None]
    if first_month is not None:
        ends = [m for m in ends if m.to_period("M") >= pd.Period(first_month, "M")]
    if last_month is not None:
        ends = [m for m in ends if m.to_period("M") <= pd.Period(last_month, "M")]
    return ends


def run_window(
    equity: EquityPanel,
    fundamentals: FundamentalsPanel,
    rates: RateSeries,
    sector_map: dict[str, str],
    sector: str,
    month_end,
    cfg: SimConfig,
    factor: pd.Series | None = None,
    benchmark_only: bool = False,
) -> tuple[MeasureRow, WindowEstimates | None]:
    """Estimate one (sector, month) window and compute both models' measures.

    Estimation failures yield a flagged row with measures omitted (NaN).
    """
    month_end = pd.Timestamp(month_end)
    nan = float("nan")
    try:
        estimates = estimate_window(
            equity, fundamentals, rates, sector_map, sector, month_end, cfg,
            factor, benchmark_only=benchmark_only,
        )
        if benchmark_only:
            full = {"dd": nan, "nod": nan, "pir": nan}
        else:
            full = compute_measures(estimates, cfg, "full")
        bench = compute_measures(estimates, cfg, "benchmark")
    except CorrjumpError as exc:
        row = MeasureRow(
            month_end, sector, nan, nan, nan, nan, nan, nan,
            flag=f"error: {exc}",
        )
        return row, None
    flag = ""
    if not np.isfinite(bench["dd"]) or (not benchmark_only and not np.isfinite(full["dd"])):
        flag = "degenerate"
    row = MeasureRow(
        month_end, sector,
        full["dd"], full["nod"], full["pir"],
        bench["dd"], bench["nod"], bench["pir"],
        flag=flag,
    )
    return row, estimates


def estimate_window(
    equity: EquityPanel,
    fundamentals: FundamentalsPanel,
    rates: RateSeries,
    sector_map: dict[str, str],
    sector: str,
    month_end: pd.Timestamp,
    cfg: SimConfig,
    factor: pd.Series | None = None,
    benchmark_only: bool = False,
) -> WindowEstimates:
    """Three-step estimation plus DCC for one window, full and benchmark."""
    calendar = equity.calendar()
    start = window_start(calendar, month_end)
    if start is None:
        raise CoverageError(f"no 12-month window ending {month_end.date()}")
    firm_ids = select_top10(equity, fundamentals, sector_map, sector, start)
    series = [
        build_firm_series(equity, fundamentals, f, (start, month_end), calendar)
        for f in firm_ids
    ]
    dates = series[0].dates
    r = rates.window_rate(start, month_end)

    if factor is None:
        factor = value_weighted_factor(equity)
    x = factor.reindex(dates)
    if x.isna().any():
        raise CoverageError(
            f"common-factor series does not cover the window ending {month_end.date()}"
        )
    x = x.to_numpy(dtype=float)

    hn_fit = fit_hn_garch(
        x, r, restarts=cfg.hn_restarts,
        seed=int(substream(cfg.seed, "hn", sector, month_end.date().isoformat()).integers(2**31)),
    )
    equity_returns = np.column_stack([s.log_equity_return[1:] for s in series])
    jump_cal = calibrate_jumps(equity_returns, seed=cfg.seed)
    jumps = jump_cal.params

    def fit_model(benchmark: bool) -> ModelEstimates:
        params, v_end, logliks, residual_cols = [], [], [], []
        for j, s in enumerate(series):
            fit = fit_firm(
                s.equity_value, s.debt_face, x, r, hn_fit.params,
                (jumps.lam, float(jumps.a[j]), float(jumps.b[j])),
                quad=cfg.quad, benchmark=benchmark,
                factor_variance=hn_fit.h, h_next=hn_fit.h_next,
                tau=cfg.maturity_days, xatol=cfg.mle_xatol,
            )
            params.append(fit.params)
            v_end.append(fit.asset_values[-1])
            logliks.append(fit.loglik)
            residual_cols.append(fit.residuals)
        dcc = fit_dcc(np.column_stack(residual_cols))
        return ModelEstimates(
            firm_params=params,
            v_end=np.array(v_end),
            omega_end=dcc.omega_last,
            dcc_a=dcc.params.a,
            dcc_b=dcc.params.b,
            logliks=np.array(logliks),
        )

    full = None if benchmark_only else fit_model(benchmark=False)
    bench = fit_model(benchmark=True)
    return WindowEstimates(
        month_end=month_end,
        sector=sector,
        firm_ids=firm_ids,
        r=r,
        hn=hn_fit.params,
        h_next=hn_fit.h_next,
        jumps=jumps,
        debt_end=np.array([s.debt_face[-1] for s in series]),
        book_assets=np.array([s.book_assets[-1] for s in series]),
        full=full,
        benchmark=bench,
    )


def _window_task(args):
    (equity, fundamentals, rates, sector_map, sector, month_end, cfg, factor,
     benchmark_only) = args
    return run_window(
        equity, fundamentals, rates, sector_map, sector, month_end, cfg, factor,
        benchmark_only=benchmark_only,
    )


def rolling_run(
    equity: EquityPanel,
    fundamentals: FundamentalsPanel,
    rates: RateSeries,
    sector_map: dict[str, str],
    sectors: list[str],
    cfg: SimConfig,
    first_month=None,
    last_month=None,
    factor: pd.Series | None = None,
    benchmark_only: bool = False,
) -> tuple[list[MeasureRow], list[WindowEstimates]]:
    """One MeasureRow per (sector, feasible month end), oldest first.

    Windows are independent work units; with ``cfg.workers > 1`` they run in
    a process pool and the merged output is identical to the serial run.
    """
    ends = feasible_month_ends(equity.calendar(), first_month, last_month)
    if not ends:
        raise CoverageError("no feasible 12-month windows in the requested range")
    tasks = [
        (equity, fundamentals, rates, sector_map, sector, m, cfg, factor, benchmark_only)
        for sector in sectors
        for m in ends
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_window_task, tasks))
    else:
        results = [_window_task(t) for t in tasks]
    order = sorted(range(len(tasks)), key=lambda i: (tasks[i][4], tasks[i][5]))
    rows = [results[i][0] for i in order]
    estimates = [results[i][1] for i in order if results[i][1] is not None]
    return rows, estimates


def write_measures(path, rows: list[MeasureRow]) -> None:
    """measures.csv: month_end,sector,dd,nod,pir,dd_ben,nod_ben,pir_ben,flag."""
    from .market_data import write_csv

    def cell(value: float):
        return "" if not np.isfinite(value) else repr(float(value))

    write_csv(
        path,
        ["month_end", "sector", "dd", "nod", "pir", "dd_ben", "nod_ben", "pir_ben", "flag"],
        (
            (
                row.month_end.date().isoformat(), row.sector,
                cell(row.dd), cell(row.nod), cell(row.pir),
                cell(row.dd_ben), cell(row.nod_ben), cell(row.pir_ben), row.flag,
            )
            for row in rows
        ),
    )


def estimates_to_dict(we: WindowEstimates) -> dict:
    """Manifest section for one window (round-trips via estimates_from_dict)."""
    def model_dict(me: ModelEstimates) -> dict:
        return {
            "mu": [p.mu for p in me.firm_params],
            "loading": [p.loading for p in me.firm_params],
            "xi": [p.xi for p in me.firm_params],
            "v_end": list(map(float, me.v_end)),
            "dcc_a": me.dcc_a,
            "dcc_b": me.dcc_b,
            "loglik": list(map(float, me.logliks)),
            "omega_end": {
                f"row{i}": list(map(float, row)) for i, row in enumerate(me.omega_end)
            },
        }

    out = {
        "month_end": we.month_end.date().isoformat(),
        "sector": we.sector,
        "firm_ids": list(we.firm_ids),
        "r": we.r,
        "h_next": we.h_next,
        "debt_end": list(map(float, we.debt_end)),
        "book_assets": list(map(float, we.book_assets)),
        "hn": {
            "omega": we.hn.omega, "alpha": we.hn.alpha, "eta": we.hn.eta,
            "gamma": we.hn.gamma, "lam": we.hn.lam,
        },
        "jumps": {
            "lam": we.jumps.lam,
            "a": list(map(float, we.jumps.a)),
            "b": list(map(float, we.jumps.b)),
        },
        "benchmark": model_dict(we.benchmark),
    }
    if we.full is not None:
        out["full"] = model_dict(we.full)
    return out


def estimates_from_dict(data: dict) -> WindowEstimates:
    def model_from(entry: dict) -> ModelEstimates:
        params = [
            FirmParams(m, l, x)
            for m, l, x in zip(entry["mu"], entry["loading"], entry["xi"])
        ]
        rows = [entry["omega_end"][f"row{i}"] for i in range(len(params))]
        return ModelEstimates(
            firm_params=params,
            v_end=np.array(entry["v_end"], dtype=float),
            omega_end=np.array(rows, dtype=float),
            dcc_a=float(entry["dcc_a"]),
            dcc_b=float(entry["dcc_b"]),
            logliks=np.array(entry["loglik"], dtype=float),
        )

    hn = data["hn"]
    jumps = data["jumps"]
    return WindowEstimates(
        month_end=pd.Timestamp(data["month_end"]),
        sector=data["sector"],
        firm_ids=list(data["firm_ids"]),
        r=float(data["r"]),
        hn=HNParams(hn["omega"], hn["alpha"], hn["eta"], hn["gamma"], hn["lam"]),
        h_next=float(data["h_next"]),
        jumps=JumpParams(jumps["lam"], np.array(jumps["a"]), np.array(jumps["b"])),
        debt_end=np.array(data["debt_end"], dtype=float),
        book_assets=np.array(data["book_assets"], dtype=float),
        full=model_from(data["full"]) if "full" in data else None,
        benchmark=model_from(data["benchmark"]),
    )
