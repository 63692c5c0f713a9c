"""Panel ingestion and per-firm daily series construction.

Raw inputs are four CSVs (equity prices/shares, quarterly fundamentals, the
1-year constant-maturity rate, and a firm-to-sector map). Accounting data is
lagged three calendar months to acknowledge reporting delays (the shifted
date is snapped to the next trading day), linearly interpolated to daily
frequency between lagged report dates, and carried forward after the last
report. The one-year debt proxy is half the long-term debt plus the short
term debt. Sector universes hold the ten largest firms by book assets at the
window start among firms continuously listed over the prior year.

All transformations here are pure; dates are taken as-is (no exchange
calendar is embedded) and a window requires a fully aligned panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import CoverageError, DataError, ParseError, UniverseError

SECTORS = ("depositories", "broker_dealers", "insurance", "others")

UNIVERSE_SIZE = 10

_EQUITY_COLUMNS = ("date", "firm_id", "price", "shares_outstanding")
_FUNDAMENTAL_COLUMNS = (
    "report_date", "firm_id", "long_term_debt", "short_term_debt",
    "book_assets", "book_equity",
)
_RATE_COLUMNS = ("date", "annual_rate")


@dataclass
class EquityPanel:
    """Daily prices and shares, sorted by (firm_id, date), with log returns."""

    frame: pd.DataFrame

    @property
    def firms(self) -> list[str]:
        return sorted(self.frame["firm_id"].unique())

    def firm(self, firm_id: str) -> pd.DataFrame:
        return self.frame[self.frame["firm_id"] == firm_id]

    def calendar(self, start=None, end=None) -> pd.DatetimeIndex:
        """Union of trading dates across firms, optionally range-restricted."""
        dates = self.frame["date"]
        if start is not None:
            dates = dates[dates >= start]
        if end is not None:
            dates = dates[dates <= end]
        return pd.DatetimeIndex(np.sort(dates.unique()))


@dataclass
class FundamentalsPanel:
    frame: pd.DataFrame

    def firm(self, firm_id: str) -> pd.DataFrame:
        return self.frame[self.frame["firm_id"] == firm_id]


@dataclass
class RateSeries:
    frame: pd.DataFrame

    def window_rate(self, start, end) -> float:
        """Mean annual rate over [start, end], divided by 252 (per-day units)."""
        rows = self.frame[(self.frame["date"] >= start) & (self.frame["date"] <= end)]
        if rows.empty:
            raise CoverageError(f"no rate observations in [{start}, {end}]")
        return float(rows["annual_rate"].mean()) / 252.0


@dataclass
class FirmSeries:
    """Aligned daily series for one firm over one window."""

    firm_id: str
    dates: pd.DatetimeIndex
    equity_value: np.ndarray
    debt_face: np.ndarray
    book_assets: np.ndarray
    book_equity: np.ndarray
    log_equity_return: np.ndarray  # NaN on the first day


def _read_csv(path, columns: tuple[str, ...]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise ParseError(f"input file not found: {path}") from None
    except Exception as exc:
        raise ParseError(f"could not read {path}: {exc}") from exc
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
    return frame[list(columns)]


def _parse_dates(frame: pd.DataFrame, column: str, path) -> pd.Series:
    parsed = pd.to_datetime(frame[column], format="%Y-%m-%d", errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"{path}: column '{column}', line {row + 2}: "
            f"invalid ISO date {frame[column].iloc[row]!r}"
        )
    return parsed


def _parse_floats(frame: pd.DataFrame, column: str, path) -> pd.Series:
    parsed = pd.to_numeric(frame[column], errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"{path}: column '{column}', line {row + 2}: "
            f"not a number: {frame[column].iloc[row]!r}"
        )
    return parsed.astype(float)


def _check_positive(values: pd.Series, column: str, path, strict: bool) -> None:
    bad = (values <= 0) if strict else (values < 0)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        kind = "positive" if strict else "non-negative"
        raise ParseError(
            f"{path}: column '{column}', line {row + 2}: must be {kind}, "
            f"got {values.iloc[row]!r}"
        )


def _reject_duplicates(frame: pd.DataFrame, keys: list[str], path) -> None:
    dup = frame.duplicated(subset=keys, keep=False)
    if dup.any():
        row = frame[dup].iloc[0]
        label = ", ".join(f"{k}={row[k]}" for k in keys)
        raise DataError(f"{path}: duplicate observation ({label})")


def load_panels(equity_csv, fundamentals_csv, rates_csv):
    """Read and validate the three core panels.

    Output frames are sorted by (firm_id, date); duplicate (firm, date) rows,
    schema violations, and invariant breaches raise with the offending
    row/column named. Equity log returns are derived from prices per firm.
    """
    eq = _read_csv(equity_csv, _EQUITY_COLUMNS)
    eq = eq.assign(
        date=_parse_dates(eq, "date", equity_csv),
        price=_parse_floats(eq, "price", equity_csv),
        shares_outstanding=_parse_floats(eq, "shares_outstanding", equity_csv),
    )
    _check_positive(eq["price"], "price", equity_csv, strict=True)
    _check_positive(eq["shares_outstanding"], "shares_outstanding", equity_csv, strict=True)
    _reject_duplicates(eq, ["firm_id", "date"], equity_csv)
    eq = eq.sort_values(["firm_id", "date"], kind="mergesort").reset_index(drop=True)
    eq["log_return"] = np.log(eq["price"]).groupby(eq["firm_id"]).diff()

    fu = _read_csv(fundamentals_csv, _FUNDAMENTAL_COLUMNS)
    fu = fu.assign(report_date=_parse_dates(fu, "report_date", fundamentals_csv))
    for col in ("long_term_debt", "short_term_debt", "book_assets", "book_equity"):
        fu[col] = _parse_floats(fu, col, fundamentals_csv)
    for col in ("long_term_debt", "short_term_debt", "book_assets"):
        _check_positive(fu[col], col, fundamentals_csv, strict=False)
    _reject_duplicates(fu, ["firm_id", "report_date"], fundamentals_csv)
    fu = fu.sort_values(["firm_id", "report_date"], kind="mergesort").reset_index(drop=True)

    ra = _read_csv(rates_csv, _RATE_COLUMNS)
    ra = ra.assign(
        date=_parse_dates(ra, "date", rates_csv),
        annual_rate=_parse_floats(ra, "annual_rate", rates_csv),
    )
    if (ra["annual_rate"] <= -0.05).any():
        row = int(np.flatnonzero(ra["annual_rate"] <= -0.05)[0])
        raise ParseError(
            f"{rates_csv}: column 'annual_rate', line {row + 2}: below the -5% sanity bound"
        )
    _reject_duplicates(ra, ["date"], rates_csv)
    ra = ra.sort_values("date", kind="mergesort").reset_index(drop=True)

    return EquityPanel(eq), FundamentalsPanel(fu), RateSeries(ra)


def load_sectors(path) -> dict[str, str]:
    """firm_id -> sector map from sectors.csv."""
    frame = _read_csv(path, ("firm_id", "sector"))
    bad = ~frame["sector"].isin(SECTORS)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"{path}: column 'sector', line {row + 2}: unknown sector "
            f"{frame['sector'].iloc[row]!r} (expected one of {', '.join(SECTORS)})"
        )
    _reject_duplicates(frame, ["firm_id"], path)
    return dict(zip(frame["firm_id"], frame["sector"]))


def debt_proxy(long_term_debt, short_term_debt):
    """One-year debt: half the long-term debt plus the short-term debt."""
    ltd = np.asarray(long_term_debt, dtype=float)
    std = np.asarray(short_term_debt, dtype=float)
    if np.any(ltd < 0) or np.any(std < 0):
        raise DataError("debt inputs must be non-negative")
    out = 0.5 * ltd + std
    return float(out) if out.ndim == 0 else out


def lagged_report_dates(report_dates, calendar: pd.DatetimeIndex) -> pd.DatetimeIndex:
    """Shift reports 3 calendar months, snap to the next trading day.

    Dates beyond the calendar end stay at the shifted value (they only matter
    once trading days exist for them).
    """
    shifted = pd.DatetimeIndex(report_dates) + pd.DateOffset(months=3)
    pos = calendar.searchsorted(shifted, side="left")
    out = []
    for raw, p in zip(shifted, pos):
        out.append(calendar[p] if p < len(calendar) else raw)
    return pd.DatetimeIndex(out)


def _interp_to_days(
    days: pd.DatetimeIndex, anchors: pd.DatetimeIndex, values: np.ndarray, what: str
) -> np.ndarray:
    """Calendar-linear interpolation at trading days, carry-forward at the end."""
    if len(anchors) == 0:
        raise CoverageError(f"no usable {what} reports")
    if days[0] < anchors[0]:
        raise CoverageError(
            f"window starts {days[0].date()} before the first lagged {what} "
            f"report takes effect ({anchors[0].date()})"
        )
    order = np.argsort(anchors.values, kind="mergesort")
    xs = anchors.values.astype("datetime64[D]").astype(float)[order]
    ys = np.asarray(values, dtype=float)[order]
    keep = np.append(np.diff(xs) > 0, True)  # a later report on the same day wins
    return np.interp(days.values.astype("datetime64[D]").astype(float), xs[keep], ys[keep])


def build_firm_series(
    equity: EquityPanel,
    fundamentals: FundamentalsPanel,
    firm_id: str,
    window: tuple,
    calendar: pd.DatetimeIndex | None = None,
) -> FirmSeries:
    """Aligned daily series for ``firm_id`` over ``window`` = (start, end).

    ``calendar`` fixes the required trading days (defaults to the panel-wide
    calendar over the window); any gap raises :class:`CoverageError`.
    """
    start, end = pd.Timestamp(window[0]), pd.Timestamp(window[1])
    if calendar is None:
        calendar = equity.calendar(start, end)
    else:
        calendar = pd.DatetimeIndex(calendar)
        calendar = calendar[(calendar >= start) & (calendar <= end)]
    if len(calendar) == 0:
        raise CoverageError(f"no trading days in [{start.date()}, {end.date()}]")

    rows = equity.firm(firm_id)
    rows = rows[(rows["date"] >= start) & (rows["date"] <= end)]
    if len(rows) != len(calendar) or not np.array_equal(rows["date"].values, calendar.values):
        raise CoverageError(
            f"{firm_id}: equity gaps inside the window "
            f"({len(rows)} rows vs {len(calendar)} trading days)"
        )

    reports = fundamentals.firm(firm_id)
    if reports.empty:
        raise CoverageError(f"{firm_id}: no fundamentals reports")
    full_calendar = equity.calendar()
    anchors = lagged_report_dates(reports["report_date"], full_calendar)
    debt = debt_proxy(reports["long_term_debt"].values, reports["short_term_debt"].values)
    debt_face = _interp_to_days(calendar, anchors, debt, "debt")
    book_assets = _interp_to_days(calendar, anchors, reports["book_assets"].values, "book-asset")
    book_equity = _interp_to_days(calendar, anchors, reports["book_equity"].values, "book-equity")

    equity_value = rows["price"].values * rows["shares_outstanding"].values
    log_ret = np.concatenate([[np.nan], np.diff(np.log(rows["price"].values))])
    return FirmSeries(
        firm_id=firm_id,
        dates=calendar,
        equity_value=equity_value.astype(float),
        debt_face=debt_face,
        book_assets=book_assets,
        book_equity=book_equity,
        log_equity_return=log_ret,
    )


def book_assets_at(
    equity: EquityPanel, fundamentals: FundamentalsPanel, firm_id: str, date
) -> float:
    """Lagged, interpolated book assets of one firm on one date."""
    reports = fundamentals.firm(firm_id)
    if reports.empty:
        raise CoverageError(f"{firm_id}: no fundamentals reports")
    anchors = lagged_report_dates(reports["report_date"], equity.calendar())
    days = pd.DatetimeIndex([pd.Timestamp(date)])
    return float(_interp_to_days(days, anchors, reports["book_assets"].values, "book-asset")[0])


def continuously_listed(
    equity: EquityPanel, firm_id: str, start, end, calendar: pd.DatetimeIndex | None = None
) -> bool:
    """True when the firm has a row on every panel trading day in [start, end)."""
    if calendar is None:
        calendar = equity.calendar()
    calendar = calendar[(calendar >= pd.Timestamp(start)) & (calendar < pd.Timestamp(end))]
    rows = equity.firm(firm_id)
    dates = rows["date"][(rows["date"] >= pd.Timestamp(start)) & (rows["date"] < pd.Timestamp(end))]
    return len(dates) == len(calendar) and np.array_equal(dates.values, calendar.values)


def select_top10(
    equity: EquityPanel,
    fundamentals: FundamentalsPanel,
    sector_map: dict[str, str],
    sector: str,
    window_start,
) -> list[str]:
    """Ten largest eligible firms by book assets at the window start.

    Eligible means: mapped to ``sector``, continuously listed over the prior
    year, and with a lagged fundamentals report already in effect. Ties at
    the size boundary break toward the lexically smaller firm_id; output
    order is size-descending and independent of input row order.
    """
    if sector not in SECTORS:
        raise DataError(f"unknown sector {sector!r}")
    start = pd.Timestamp(window_start)
    prior = start - pd.DateOffset(years=1)
    calendar = equity.calendar()
    candidates = []
    for firm_id in sorted(f for f, s in sector_map.items() if s == sector):
        if not continuously_listed(equity, firm_id, prior, start, calendar):
            continue
        if not (equity.firm(firm_id)["date"] == start).any():
            continue
        try:
            assets = book_assets_at(equity, fundamentals, firm_id, start)
        except CoverageError:
            continue
        candidates.append((firm_id, assets))
    if len(candidates) < UNIVERSE_SIZE:
        raise UniverseError(
            f"{sector}: only {len(candidates)} eligible firms at {start.date()}, "
            f"need {UNIVERSE_SIZE}"
        )
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return [firm_id for firm_id, _ in candidates[:UNIVERSE_SIZE]]


def sector_stats(series: list[FirmSeries], month_end=None) -> tuple[float, float, float]:
    """(SIZE, LVG, RET) for a sector universe at a month end.

    SIZE is log total book assets; firm leverage is quasi-market assets over
    market equity with a market-equity-weighted sector mean; RET is the
    market-equity-weighted sum of the firms' one-year log equity returns
    (the window's span). Defaults to the last day of the series.
    """
    if month_end is None:
        idx = [len(s.dates) - 1 for s in series]
    else:
        ts = pd.Timestamp(month_end)
        idx = []
        for s in series:
            where = np.flatnonzero(s.dates == ts)
            if where.size == 0:
                raise CoverageError(f"{s.firm_id}: no data at {ts.date()}")
            idx.append(int(where[0]))
    market_equity = np.array([s.equity_value[i] for s, i in zip(series, idx)])
    if np.any(market_equity <= 0):
        raise DataError("zero market equity in sector universe")
    book_assets = np.array([s.book_assets[i] for s, i in zip(series, idx)])
    book_equity = np.array([s.book_equity[i] for s, i in zip(series, idx)])
    weights = market_equity / market_equity.sum()
    lvg_firm = (book_assets - book_equity + market_equity) / market_equity
    annual_ret = np.array([np.nansum(s.log_equity_return) for s in series])
    size = float(np.log(book_assets.sum()))
    lvg = float(weights @ lvg_firm)
    ret = float(weights @ annual_ret)
    return size, lvg, ret


def __getattr__(name):
    # synth_market lives in .synth (it needs the pricing engine) but belongs
    # to this module's public surface; lazy import avoids the import cycle.
    if name in ("synth_market", "SynthConfig", "SynthTruth", "RegimeSegment"):
        from . import synth

        return getattr(synth, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def write_csv(path, header: list[str], rows) -> None:
    """Write a CSV with round-trip float formatting (repr) for determinism."""
    import csv

    def fmt(value):
        if isinstance(value, float):
            return repr(value)
        return str(value)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
