"""Command-line interface: ``pvartarch {fit,forecast,bench,simulate,inspect}``.

Settings come from built-in defaults, then an optional YAML key-value file
(``--config``), then command-line flags. Every output carries a hash of the
resolved settings and the seed, and never a wall-clock time, so equal
inputs give byte-identical files.

Exit codes
----------
0  success
1  internal error
2  usage error (bad flag, bad setting, unknown model name)
3  missing input file
4  malformed input data
5  holiday calendar does not cover the requested years
6  sample or history too short for estimation / forecasting
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .basis import dump_basis
from .calendar import HolidayCalendar
from .config import COMPONENTS, BasisConfig, EstimatorConfig, LagSpec
from .errors import (
    AmbiguityUnresolvable,
    DegenerateSeries,
    HistoryTooShort,
    HolidayCoverage,
    MissingColumn,
    MissingInput,
    NonFiniteInput,
    NonMonotonicTimestamps,
    SampleTooShort,
    UnparsableRow,
)
from .ingest import SERIES, load_panel, normalize_dst

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISSING, EXIT_DATA, EXIT_HOLIDAYS, EXIT_ESTIMATION = range(7)

DATA_ERRORS = (MissingColumn, NonMonotonicTimestamps, UnparsableRow, AmbiguityUnresolvable, DegenerateSeries, NonFiniteInput)

DEFAULTS = {
    "data": None,
    "holidays": None,
    "out_dir": ".",
    "threads": 1,
    "seed": 0,
    "start": None,
    "end": None,
    # estimation
    "lags": "default",
    "standardize": True,
    "tolerance": 1e-3,
    "kmax": 4,
    "sigma_floor": 1e-4,
    "phase_precedence": "in",
    "timezone": "Europe/Berlin",
    "basis": {},
    # forecast
    "horizon": 168,
    "mc": 1000,
    "coverage": [90.0, 99.0],
    # bench
    "models": ["pvartarch", "pvar", "ar", "var", "persistent"],
    "window": 18481,
    "bench_horizon": 672,
    "step": 24,
    "ar_order": 1210,
    "var_order": 555,
    # simulate
    "hours": 20000,
    "sim_start": "2012-01-02 00:00",
}

# settings that only choose where files go; they do not enter the config hash
LOCATION_KEYS = ("out_dir", "model_out", "model_in", "output", "dump_basis")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def _csv_floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_names(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def load_config_file(path):
    """Read a YAML mapping; keys may use dashes or underscores."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise MissingInput(str(path), "--config") from None
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a key-value mapping")
    out = {}
    for key, value in data.items():
        k = str(key).replace("-", "_")
        if k not in DEFAULTS and k not in LOCATION_KEYS:
            raise UsageError(f"unknown config key {key!r}")
        out[k] = value
    return out


def resolve_settings(args):
    """Merge defaults, the optional config file and explicit flags."""
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    settings.update(given)
    if isinstance(settings["coverage"], (str, int, float)):
        settings["coverage"] = _csv_floats(settings["coverage"])
    if isinstance(settings["models"], str):
        settings["models"] = _csv_names(settings["models"])
    for key in ("threads", "kmax", "horizon", "window", "bench_horizon", "step", "ar_order", "var_order", "hours"):
        if int(settings[key]) < 1:
            raise UsageError(f"{key.replace('_', '-')} must be a positive integer")
        settings[key] = int(settings[key])
    if int(settings["mc"]) < 0:
        raise UsageError("mc must be non-negative")
    settings["mc"] = int(settings["mc"])
    settings["seed"] = int(settings["seed"])
    if any(not 0 < c < 100 for c in settings["coverage"]):
        raise UsageError("coverages must lie strictly between 0 and 100")
    for key in ("tolerance", "sigma_floor"):
        if float(settings[key]) <= 0:
            raise UsageError(f"{key.replace('_', '-')} must be positive")
        settings[key] = float(settings[key])
    return settings


def config_hash(settings):
    """Short digest of every setting that can change results."""
    core = {k: v for k, v in settings.items() if k not in LOCATION_KEYS}
    blob = json.dumps(core, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def estimator_config(settings):
    lags = settings["lags"]
    if isinstance(lags, str):
        if lags == "default":
            lags = LagSpec.default()
        elif lags == "compact":
            lags = LagSpec.compact()
        else:
            raise UsageError(f"unknown lag preset {lags!r}; use default, compact or a mapping")
    elif isinstance(lags, dict):
        try:
            lags = LagSpec.from_dict(lags)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"invalid lag specification: {exc}") from None
    try:
        basis = BasisConfig(**(settings["basis"] or {}))
        return EstimatorConfig(
            tolerance=settings["tolerance"],
            max_iterations=settings["kmax"],
            standardize=bool(settings["standardize"]),
            sigma_floor=settings["sigma_floor"],
            phase_precedence=settings["phase_precedence"],
            timezone=settings["timezone"],
            basis=basis,
            lags=lags,
            threads=settings["threads"],
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid estimation settings: {exc}") from None


def header_lines(command, settings):
    return [
        f"pvartarch {__version__} {command}",
        f"config_hash: {config_hash(settings)}",
        f"seed: {settings['seed']}",
        "config: " + json.dumps({k: v for k, v in settings.items() if k not in LOCATION_KEYS}, sort_keys=True, default=str),
    ]


def _write_table(path, frame, header, float_format="%.6f"):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        frame.to_csv(fh, index=False, float_format=float_format, lineterminator="\n")
    return Path(path)


def _write_json(path, data):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(data, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")
    return Path(path)


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(out_dir, command, settings, files):
    entries = [{"file": Path(f).name, "sha256": _digest(f)} for f in files]
    return _write_json(
        Path(out_dir) / f"manifest_{command}.json",
        {"command": command, "version": __version__, "config_hash": config_hash(settings), "seed": settings["seed"], "files": entries},
    )


# ------------------------------------------------------------------ inputs


def _holidays(settings):
    if settings["holidays"]:
        return HolidayCalendar.from_file(settings["holidays"])
    return HolidayCalendar.bundled()


def _panel(settings):
    if not settings["data"]:
        raise MissingInput("hourly data file", "--data")
    panel = normalize_dst(load_panel(settings["data"], timezone=settings["timezone"]))
    stamps = panel.timestamps
    lo, hi = 0, panel.n
    if settings["start"]:
        lo = int(stamps.searchsorted(pd.Timestamp(settings["start"])))
    if settings["end"]:
        hi = int(stamps.searchsorted(pd.Timestamp(settings["end"]), side="right"))
    if hi - lo < 1:
        raise SampleTooShort("date range selects no observations")
    return panel.slice(lo, hi) if (lo, hi) != (0, panel.n) else panel


def _out_dir(settings):
    path = Path(settings["out_dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- commands


def cmd_fit(settings):
    from .estimator import (
        coefficient_table,
        decompose_sigma,
        effect_in_units,
        fit,
        leverage_curve,
        residual_diagnostics,
    )

    config = estimator_config(settings)
    panel = _panel(settings)
    holidays = _holidays(settings)
    out = _out_dir(settings)
    header = header_lines("fit", settings)
    model = fit(panel, holidays, config)
    files = []

    model_path = Path(settings.get("model_out") or out / "model.json")
    data = model.to_dict()
    data["run"] = {"config_hash": config_hash(settings), "seed": settings["seed"]}
    files.append(_write_json(model_path, data))

    trace = pd.DataFrame(model.trace.to_rows(), columns=["iteration", "equation", "delta", "lambda", "active"])
    files.append(_write_table(out / "trace.csv", trace, header + [f"stop_reason: {model.trace.stop_reason}"], "%.10g"))

    rows = []
    for i in COMPONENTS:
        for r in coefficient_table(model.fits[i]):
            rows.append({"equation": i, **r})
    tv = pd.DataFrame(rows, columns=["equation", "label", "role", "estimate", "se", "t", "p"])
    files.append(_write_table(out / "tvalues.csv", tv, header))

    stamps = panel.timestamps
    parts = []
    for i in COMPONENTS:
        f = model.fits[i]
        det, pos, neg = decompose_sigma(f)
        parts.append(
            pd.DataFrame(
                {
                    "timestamp": stamps[f.rows].strftime("%Y-%m-%dT%H:%M"),
                    "equation": i,
                    "sigma": det + pos + neg,
                    "deterministic": det,
                    "positive": pos,
                    "negative": neg,
                }
            )
        )
    files.append(_write_table(out / "sigma_decomposition.csv", pd.concat(parts, ignore_index=True), header))

    lev = []
    if not model.homoscedastic:
        for i in COMPONENTS:
            for k, rec in zip(model.fits[i].tarch_lags, leverage_curve(model.fits[i])):
                lev.append({"equation": i, "k": k, "estimate": rec.estimate, "se": rec.se, "t": rec.t, "p": rec.p})
    files.append(_write_table(out / "leverage.csv", pd.DataFrame(lev, columns=["equation", "k", "estimate", "se", "t", "p"]), header))

    acf = residual_diagnostics(model)
    for name, grid in acf.items():
        m, _, K = grid.shape
        ii, jj, kk = np.meshgrid(np.arange(m), np.arange(m), np.arange(K), indexing="ij")
        frame = pd.DataFrame(
            {
                "lag": kk.ravel(),
                "row": np.array(COMPONENTS)[ii.ravel()],
                "column": np.array(COMPONENTS)[jj.ravel()],
                "acf": grid.ravel(),
            }
        ).sort_values(["row", "column", "lag"], kind="stable")
        files.append(_write_table(out / f"acf_{name}.csv", frame, header + [f"band: {2 / np.sqrt(model.z.shape[0]):.6f}"]))

    effects = effect_in_units(model)
    merit = pd.DataFrame(
        [
            {"quantity": "load", "estimate": effects["load"]["eur_per_mwh_per_gwh"], "halfwidth90": effects["load"]["halfwidth90"], "t": effects["load"]["t"], "unit": "EUR/MWh per GWh"},
            {
                "quantity": "renewables",
                "estimate": effects["renewables"]["eur_per_mwh_per_gwh"],
                "halfwidth90": effects["renewables"]["halfwidth90"],
                "t": effects["renewables"]["t"],
                "unit": "EUR/MWh per GWh",
            },
            {"quantity": "trend", "estimate": effects["trend"]["eur_per_mwh_per_year"], "halfwidth90": effects["trend"]["halfwidth90"], "t": effects["trend"]["t"], "unit": "EUR/MWh per year"},
        ]
    )
    files.append(_write_table(out / "merit_order.csv", merit, header))

    if settings.get("dump_basis"):
        from .estimator import prepare_inputs

        _, bases = prepare_inputs(panel, holidays, config)
        files.append(dump_basis(settings["dump_basis"], panel.timestamps, [bases[i] for i in COMPONENTS]))

    _manifest(out, "fit", settings, files)
    print(f"fit: {len(model.trace)} iteration(s), stop={model.trace.stop_reason}, model={model_path}")
    return EXIT_OK


def cmd_forecast(settings):
    from .estimator import FittedModel
    from .forecast import forecast_bands, write_forecast

    if not settings.get("model_in"):
        raise MissingInput("model file", "--model-in")
    try:
        model = FittedModel.load(settings["model_in"])
    except FileNotFoundError:
        raise MissingInput(str(settings["model_in"]), "--model-in") from None
    panel = _panel(settings)
    holidays = _holidays(settings)
    out = _out_dir(settings)
    bands = forecast_bands(model, panel, settings["horizon"], holidays, coverages=settings["coverage"], n_mc=settings["mc"], seed=settings["seed"])
    path = Path(settings.get("output") or out / "forecast.csv")
    write_forecast(bands, path, header_lines("forecast", settings))
    _manifest(out, "forecast", settings, [path])
    print(f"forecast: {bands.H} hours, {settings['mc']} paths, file={path}")
    return EXIT_OK


def cmd_bench(settings):
    from .evalbench import MODELS, rolling_study

    unknown = [m for m in settings["models"] if m not in MODELS]
    if unknown or not settings["models"]:
        raise UsageError(f"unknown model name(s) {unknown}; valid names: {', '.join(MODELS)}")
    config = estimator_config(settings)
    panel = _panel(settings)
    holidays = _holidays(settings)
    out = _out_dir(settings)
    header = header_lines("bench", settings)
    report = rolling_study(
        panel,
        models=settings["models"],
        window=settings["window"],
        H=settings["bench_horizon"],
        step=settings["step"],
        holidays=holidays,
        config=config,
        p_max=(settings["ar_order"], settings["var_order"]),
        threads=settings["threads"],
    )
    full = report.to_frame()
    grid = [h for h in (1, 4, 8, 12, 16, 20, 24, 168, 672) if h <= report.H]
    files = [
        _write_table(out / "bench_report.csv", full[full["h"].isin(grid)].reset_index(drop=True), header + [f"origins: {report.N}"]),
        _write_table(out / "bench_all_horizons.csv", full, header + [f"origins: {report.N}"]),
        _write_table(out / "bench_summary.csv", report.summary(), header + [f"origins: {report.N}"]),
    ]
    _manifest(out, "bench", settings, files)
    print(f"bench: {report.N} origin(s), models={','.join(report.models)}")
    return EXIT_OK


def cmd_simulate(settings):
    from .synthetic import TrueModel, simulate, write_panel_csv

    out = _out_dir(settings)
    sim = simulate(TrueModel.demo(), settings["hours"], seed=settings["seed"], start=settings["sim_start"], timezone=settings["timezone"])
    path = Path(settings.get("output") or out / "synthetic.csv")
    write_panel_csv(sim.panel, path, timezone=settings["timezone"], header=header_lines("simulate", settings))
    _manifest(out, "simulate", settings, [path])
    print(f"simulate: {settings['hours']} hours, file={path}")
    return EXIT_OK


def cmd_inspect(settings):
    """Print a JSON summary of a model file and/or a data file."""
    report = {}
    if settings.get("model_in"):
        from .estimator import FittedModel

        try:
            model = FittedModel.load(settings["model_in"])
        except FileNotFoundError:
            raise MissingInput(str(settings["model_in"]), "--model-in") from None
        eqs = {}
        for i in COMPONENTS:
            p = model.equations[i]
            eqs[i] = {
                "columns": len(p.labels),
                "selected": int(np.count_nonzero(p.theta)),
                "volatility_terms": int(np.count_nonzero(p.alpha_tilde)),
                "gamma": p.gamma,
                "lambda": p.lam,
            }
        report["model"] = {
            "sample": list(model.sample),
            "homoscedastic": model.homoscedastic,
            "iterations": None if model.trace is None else len(model.trace),
            "stop_reason": None if model.trace is None else model.trace.stop_reason,
            "max_lag": model.lags.max_lag,
            "equations": eqs,
        }
    if settings.get("data"):
        panel = _panel(settings)
        report["data"] = {
            "hours": panel.n,
            "first": panel.timestamps[0].strftime("%Y-%m-%dT%H:%M"),
            "last": panel.timestamps[-1].strftime("%Y-%m-%dT%H:%M"),
            "summer_time_hours": int(np.count_nonzero(panel.dst)),
            **{name: {"mean": float(np.mean(getattr(panel, name))), "sd": float(np.std(getattr(panel, name), ddof=1))} for name in SERIES},
        }
    if settings.get("holidays"):
        cal = HolidayCalendar.from_file(settings["holidays"])
        report["holidays"] = {"years": sorted(cal.years), "national": len(cal.national), "regional": len(cal.regional)}
    if not report:
        raise UsageError("inspect needs --model-in, --data or --holidays")
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _global_flags():
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="YAML key-value file; flags given on the command line override it")
    g.add_argument("--data", help="hourly input CSV (timestamp, price_eur_mwh, load_mw, wind_mw, solar_mw)")
    g.add_argument("--holidays", help="holiday CSV (date, kind, name); default: bundled 2010-2014 German calendar")
    g.add_argument("--out-dir", dest="out_dir", help="directory for output files (default: current directory)")
    g.add_argument("--threads", type=int, help="worker threads (default 1)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--timezone", help="market time zone (default Europe/Berlin)")
    g.add_argument("--start", help="first timestamp of the data range to use")
    g.add_argument("--end", help="last timestamp of the data range to use")
    return p


def _estimation_flags(p):
    g = p.add_argument_group("estimation")
    g.add_argument("--lags", help="lag preset: default or compact (mappings via --config)")
    g.add_argument("--kmax", type=int, help="maximal reweighting iterations (default 4; 1 gives the constant-variance model)")
    g.add_argument("--tolerance", type=float, help="stopping tolerance on the mean volatility change (default 1e-3)")
    g.add_argument("--no-standardize", dest="standardize", action="store_false", help="fit in natural units")


def build_parser():
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="pvartarch",
        description="Periodic VAR-TARCH estimation and forecasting for hourly electricity prices.",
        epilog="Exit codes: 0 ok, 1 internal error, 2 usage, 3 missing input, 4 bad data, 5 holiday coverage, 6 sample too short.",
    )
    parser.add_argument("--version", action="version", version=f"pvartarch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("fit", parents=[common], argument_default=argparse.SUPPRESS, help="estimate the model and write diagnostics")
    _estimation_flags(p)
    p.add_argument("--model-out", dest="model_out", help="model file (default OUT_DIR/model.json)")
    p.add_argument("--dump-basis", dest="dump_basis", help="write the evaluated basis matrices to this CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", parents=[common], argument_default=argparse.SUPPRESS, help="point forecasts and Monte-Carlo bands")
    p.add_argument("--model-in", dest="model_in", help="fitted model file")
    p.add_argument("--horizon", type=int, help="forecast hours (default 168)")
    p.add_argument("--mc", type=int, help="Monte-Carlo paths, 0 for point forecasts only (default 1000)")
    p.add_argument("--coverage", type=_csv_floats, help="central band coverages in percent (default 90,99)")
    p.add_argument("--output", help="forecast file (default OUT_DIR/forecast.csv)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("bench", parents=[common], argument_default=argparse.SUPPRESS, help="rolling-origin forecast comparison")
    _estimation_flags(p)
    p.add_argument("--models", type=_csv_names, help="comma list of pvartarch,pvar,ar,var,persistent")
    p.add_argument("--window", type=int, help="estimation window in hours (default 18481)")
    p.add_argument("--horizon", dest="bench_horizon", type=int, help="forecast hours per origin (default 672)")
    p.add_argument("--step", type=int, help="hours between origins (default 24)")
    p.add_argument("--ar-order", dest="ar_order", type=int, help="maximal univariate AR order (default 1210)")
    p.add_argument("--var-order", dest="var_order", type=int, help="maximal bivariate VAR order (default 555)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS, help="write a synthetic hourly panel")
    p.add_argument("--hours", type=int, help="hours to simulate (default 20000)")
    p.add_argument("--sim-start", dest="sim_start", help="first simulated hour (default 2012-01-02 00:00)")
    p.add_argument("--output", help="output CSV (default OUT_DIR/synthetic.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", parents=[common], argument_default=argparse.SUPPRESS, help="summarize a model, data or holiday file")
    p.add_argument("--model-in", dest="model_in", help="fitted model file")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    func = args.func
    try:
        settings = resolve_settings(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return func(settings)
    except UsageError as exc:
        print(f"pvartarch: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MissingInput as exc:
        print(f"pvartarch: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DATA_ERRORS as exc:
        print(f"pvartarch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except HolidayCoverage as exc:
        print(f"pvartarch: {exc}", file=sys.stderr)
        return EXIT_HOLIDAYS
    except (SampleTooShort, HistoryTooShort) as exc:
        print(f"pvartarch: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except Exception as exc:  # noqa: BLE001
        print(f"pvartarch: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
