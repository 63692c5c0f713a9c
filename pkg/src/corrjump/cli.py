"""Command-line front door.

Four subcommands: ``synth`` writes synthetic panels with known truth,
``measure`` runs the rolling-window pipeline and emits measures.csv plus a
run manifest, ``granger`` and ``predict`` run the lead-lag and
predictive-power tests against a stress-index series. Configuration comes
from a declarative key-value file (same format as the manifest) with flag
overrides; all randomness flows from one master seed.

Exit codes: 0 success, 1 usage/config, 2 data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import manifest
from .common_factor import HNParams
from .econometrics import (
    first_difference,
    granger_test,
    predictive_regressions,
    select_lag_bic,
)
from .errors import ConfigError, CorrjumpError, DataError
from .firm_mle import FirmParams
from .jumps import JumpParams
from .market_data import SECTORS, load_panels, load_sectors, write_csv
from .pricing import QuadratureSpec
from .risk_engine import SimConfig, estimates_to_dict, rolling_run, write_measures
from .synth import RegimeSegment, SynthConfig, synth_market, write_panels

MEASURES = ("dd", "nod", "pir")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise ConfigError(message)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not Path(path).exists():
        raise ConfigError(f"config file not found: {path}")
    return manifest.load(path)


def _require_seed(value) -> int:
    if value is None:
        raise ConfigError("a seed is required (set --seed or [run] seed)")
    return int(value)


def _as_list(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).ravel()
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise ConfigError(f"{name} must be a scalar or a list of n_firms values")
    return arr


def _synth_config(section: dict, seed: int) -> SynthConfig:
    n_firms = int(section.get("n_firms", 10))
    if n_firms < 1:
        raise ConfigError("n_firms must be at least 1")
    hn = HNParams(
        omega=float(section.get("omega", 1.0e-6)),
        alpha=float(section.get("alpha", 4.0e-6)),
        eta=float(section.get("eta", 0.85)),
        gamma=float(section.get("gamma", 150.0)),
        lam=float(section.get("lam_risk", 2.0)),
    )
    spread = np.linspace(0.85, 1.15, n_firms)
    mu = _as_list(section.get("mu", 3.0e-4), n_firms, "mu")
    loading = _as_list(section.get("loading", 0.9), n_firms, "loading") * spread
    xi = _as_list(section.get("xi", 2.0e-4), n_firms, "xi") * spread[::-1]
    jumps = JumpParams(
        float(section.get("jump_lam", 0.05)),
        _as_list(section.get("jump_mean", -0.02), n_firms, "jump_mean"),
        _as_list(section.get("jump_vol", 0.04), n_firms, "jump_vol"),
    )
    firms = [FirmParams(m, l, x) for m, l, x in zip(mu, loading, xi)]
    regimes = []
    for key in sorted(section.get("regimes", {})):
        seg = section["regimes"][key]
        regimes.append(
            RegimeSegment(
                int(seg["start"]), int(seg["end"]),
                float(seg["lam"]), float(seg.get("a_scale", 1.0)),
            )
        )
    sizes = np.linspace(2.0, 0.8, n_firms)
    return SynthConfig(
        hn=hn,
        jumps=jumps,
        firms=firms,
        n_months=int(section.get("n_months", 14)),
        days_per_month=int(section.get("days_per_month", 21)),
        start=str(section.get("start", "1996-01-01")),
        annual_rate=float(section.get("annual_rate", 0.03)),
        initial_assets=_as_list(section.get("initial_assets", 1.0e8), n_firms,
                                "initial_assets") * sizes,
        debt_ratio=_as_list(section.get("debt_ratio", 0.5), n_firms, "debt_ratio"),
        sector=str(section.get("sector", "depositories")),
        regimes=regimes,
        seed=seed,
    )


def cmd_synth(args) -> int:
    config = _load_config(args.config)
    section = dict(config.get("synth", {}))
    seed = _require_seed(args.seed if args.seed is not None else section.get("seed"))
    out = Path(args.out or config.get("run", {}).get("out", "synth_out"))
    synth_cfg = _synth_config(section, seed)
    equity, fundamentals, rates, truth = synth_market(synth_cfg)
    paths = write_panels(out, equity, fundamentals, rates, truth)
    truth_doc = {
        "synth": {
            "seed": seed,
            "n_firms": synth_cfg.n_firms,
            "n_months": synth_cfg.n_months,
            "days_per_month": synth_cfg.days_per_month,
            "annual_rate": synth_cfg.annual_rate,
            "sector": synth_cfg.sector,
            "hn": {
                "omega": synth_cfg.hn.omega, "alpha": synth_cfg.hn.alpha,
                "eta": synth_cfg.hn.eta, "gamma": synth_cfg.hn.gamma,
                "lam": synth_cfg.hn.lam,
            },
            "jumps": {
                "lam": synth_cfg.jumps.lam,
                "a": list(map(float, synth_cfg.jumps.a)),
                "b": list(map(float, synth_cfg.jumps.b)),
            },
            "firms": {
                firm: {"mu": fp.mu, "loading": fp.loading, "xi": fp.xi,
                       "debt": float(truth.debt[j])}
                for j, (firm, fp) in enumerate(zip(truth.firm_ids, synth_cfg.firms))
            },
            "regimes": {
                f"seg{i}": {"start": seg.start, "end": seg.end, "lam": seg.lam,
                            "a_scale": seg.a_scale}
                for i, seg in enumerate(synth_cfg.segments())
            },
        }
    }
    manifest.dump(truth_doc, out / "truth.txt")
    print(f"wrote {', '.join(sorted(paths))} and truth.txt to {out}")
    return 0


def _input_paths(args, config: dict) -> dict[str, str]:
    inputs = dict(config.get("inputs", {}))
    for key in ("equity", "fundamentals", "rates", "sectors", "factor"):
        override = getattr(args, key if key != "sectors" else "sector_map", None)
        if override:
            inputs[key] = override
    for key in ("equity", "fundamentals", "rates", "sectors"):
        if key not in inputs:
            raise ConfigError(f"missing input path: {key} (flag or [inputs] {key})")
        if not Path(inputs[key]).exists():
            raise ConfigError(f"input file does not exist: {inputs[key]}")
    if "factor" in inputs and inputs["factor"] and not Path(inputs["factor"]).exists():
        raise ConfigError(f"input file does not exist: {inputs['factor']}")
    return inputs


def _read_factor(path: str | None) -> pd.Series | None:
    if not path:
        return None
    frame = pd.read_csv(path)
    if not {"date", "log_return"}.issubset(frame.columns):
        raise DataError(f"{path}: factor file needs date,log_return columns")
    dates = pd.to_datetime(frame["date"], format="%Y-%m-%d")
    return pd.Series(frame["log_return"].to_numpy(dtype=float), index=dates)


def cmd_measure(args) -> int:
    config = _load_config(args.config)
    run = dict(config.get("run", {}))
    inputs = _input_paths(args, config)
    seed = _require_seed(args.seed if args.seed is not None else run.get("seed"))
    out = Path(args.out or run.get("out", "measure_out"))
    equity, fundamentals, rates = load_panels(
        inputs["equity"], inputs["fundamentals"], inputs["rates"]
    )
    sector_map = load_sectors(inputs["sectors"])
    sectors = args.sectors or run.get("sectors") or sorted(set(sector_map.values()))
    if isinstance(sectors, str):
        sectors = [s.strip() for s in sectors.split(",") if s.strip()]
    for sector in sectors:
        if sector not in SECTORS:
            raise ConfigError(f"unknown sector {sector!r}")
    cfg = SimConfig(
        n_paths=int(args.paths or run.get("paths", 10_000)),
        horizon_days=int(args.horizon_days or run.get("horizon_days", 126)),
        maturity_days=int(run.get("maturity_days", 252)),
        seed=seed,
        quad=QuadratureSpec(
            max_phi=float(run.get("quad_max_phi", 200.0)),
            nodes=int(run.get("quad_nodes", 64)),
        ),
        dd_pooling=args.dd_pooling or run.get("dd_pooling", "all"),
        workers=int(args.workers or run.get("workers", 1)),
        hn_restarts=int(run.get("hn_restarts", 3)),
        mle_xatol=float(run.get("mle_xatol", 1e-4)),
    )
    factor = _read_factor(inputs.get("factor"))
    started = time.time()
    rows, estimates = rolling_run(
        equity, fundamentals, rates, sector_map, sectors, cfg,
        first_month=run.get("first_month"), last_month=run.get("last_month"),
        factor=factor, benchmark_only=args.benchmark_only,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_measures(out / "measures.csv", rows)

    doc: dict = {
        "config": {
            "seed": seed,
            "paths": cfg.n_paths,
            "horizon_days": cfg.horizon_days,
            "maturity_days": cfg.maturity_days,
            "dd_pooling": cfg.dd_pooling,
            "workers": cfg.workers,
            "sectors": list(sectors),
            "benchmark_only": bool(args.benchmark_only),
            "inputs": {k: str(v) for k, v in inputs.items()},
        },
        "timing": {"seconds": round(time.time() - started, 3)},
        "warnings": {
            f"w{i}": f"{row.month_end.date()} {row.sector}: {row.flag}"
            for i, row in enumerate(r for r in rows if r.flag)
        },
    }
    windows: dict = {}
    for we in estimates:
        windows.setdefault(we.month_end.date().isoformat(), {})[we.sector] = (
            estimates_to_dict(we)
        )
    doc["windows"] = windows
    manifest.dump(doc, out / "manifest.txt")
    failed = sum(1 for row in rows if row.flag.startswith("error"))
    print(f"wrote {len(rows)} rows to {out / 'measures.csv'} ({failed} flagged)")
    return 0 if failed < len(rows) else 3


def _aligned_series(measures_path: str, stress_path: str, max_lag: int):
    """Per (measure, sector): aligned (stress, benchmark, full) arrays."""
    for path in (measures_path, stress_path):
        if not Path(path).exists():
            raise ConfigError(f"input file does not exist: {path}")
    meas = pd.read_csv(measures_path)
    stress = pd.read_csv(stress_path)
    if not {"month_end", "stress_value"}.issubset(stress.columns):
        raise DataError(f"{stress_path}: needs month_end,stress_value columns")
    min_rows = max(3 * max_lag + 6, 10)
    merged_all = {}
    for sector in sorted(meas["sector"].unique()):
        sub = meas[meas["sector"] == sector]
        joined = sub.merge(stress, on="month_end", how="inner").sort_values("month_end")
        for measure in MEASURES:
            cols = joined[[measure, f"{measure}_ben", "stress_value"]].dropna()
            if len(cols) < min_rows:
                raise DataError(
                    f"{sector}/{measure}: only {len(cols)} aligned months; "
                    f"need at least {min_rows} for max_lag={max_lag}"
                )
            merged_all[(measure, sector)] = (
                cols["stress_value"].to_numpy(float),
                cols[f"{measure}_ben"].to_numpy(float),
                cols[measure].to_numpy(float),
            )
    return merged_all


_TRANSFORMS = (("levels", lambda s: s), ("diff", first_difference))


def cmd_granger(args) -> int:
    max_lag = int(args.max_lag)
    aligned = _aligned_series(args.measures, args.stress, max_lag)
    rows = []
    for (measure, sector), (stress, ben, fm) in sorted(aligned.items()):
        for tname, tf in _TRANSFORMS:
            triples = {
                "fm->benchmark": (tf(ben), tf(fm)),
                "benchmark->fm": (tf(fm), tf(ben)),
                "fm->stress": (tf(stress), tf(fm)),
                "stress->fm": (tf(fm), tf(stress)),
            }
            for direction, (y, x) in triples.items():
                if np.allclose(y, x):
                    rows.append((measure, sector, tname, direction, "", "", ""))
                    continue
                lag = select_lag_bic(y, [x], max_lag)
                res = granger_test(y, x, lag, robust=True, direction=direction)
                rows.append(
                    (measure, sector, tname, direction, lag,
                     float(res.stat), float(res.pvalue))
                )
    write_csv(
        Path(args.out) if args.out else "tests.csv",
        ["measure", "sector", "transform", "direction", "lag", "stat", "pvalue"],
        rows,
    )
    print(f"wrote {len(rows)} test rows")
    return 0


def cmd_predict(args) -> int:
    max_lag = int(args.max_lag)
    aligned = _aligned_series(args.measures, args.stress, max_lag)
    rows = []
    for (measure, sector), (stress, ben, fm) in sorted(aligned.items()):
        for tname, tf in _TRANSFORMS:
            res = predictive_regressions(tf(stress), tf(ben), tf(fm), max_lag)
            rows.append(
                (measure, sector, tname,
                 float(res.r2_restricted), float(res.r2_unrestricted),
                 float(res.fstat), float(res.pvalue), res.k1, res.k2, res.k3)
            )
    write_csv(
        Path(args.out) if args.out else "predictive.csv",
        ["measure", "sector", "transform", "r2_restricted", "r2_unrestricted",
         "f", "pvalue", "k1", "k2", "k3"],
        rows,
    )
    print(f"wrote {len(rows)} regression rows")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="corrjump", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write synthetic panels with known truth")
    p_synth.add_argument("--config")
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--out")
    p_synth.set_defaults(func=cmd_synth)

    p_measure = sub.add_parser("measure", help="rolling-window systemic-risk measures")
    p_measure.add_argument("--config")
    p_measure.add_argument("--equity")
    p_measure.add_argument("--fundamentals")
    p_measure.add_argument("--rates")
    p_measure.add_argument("--sector-map", dest="sector_map")
    p_measure.add_argument("--factor")
    p_measure.add_argument("--seed", type=int)
    p_measure.add_argument("--paths", type=int)
    p_measure.add_argument("--horizon-days", type=int, dest="horizon_days")
    p_measure.add_argument("--sectors", help="comma-separated sector tags")
    p_measure.add_argument("--out")
    p_measure.add_argument("--workers", type=int)
    p_measure.add_argument("--benchmark-only", action="store_true")
    p_measure.add_argument("--dd-pooling", choices=("all", "terminal"), dest="dd_pooling")
    p_measure.set_defaults(func=cmd_measure)

    p_granger = sub.add_parser("granger", help="Granger lead-lag tests vs a stress index")
    p_granger.add_argument("--measures", required=True)
    p_granger.add_argument("--stress", required=True)
    p_granger.add_argument("--out")
    p_granger.add_argument("--max-lag", default=6, dest="max_lag")
    p_granger.set_defaults(func=cmd_granger)

    p_predict = sub.add_parser("predict", help="predictive regressions vs a stress index")
    p_predict.add_argument("--measures", required=True)
    p_predict.add_argument("--stress", required=True)
    p_predict.add_argument("--out")
    p_predict.add_argument("--max-lag", default=6, dest="max_lag")
    p_predict.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CorrjumpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
