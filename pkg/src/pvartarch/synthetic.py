"""Forward simulation of the periodic VAR-TARCH model for tests and demos.

The recursion is written as an explicit per-hour loop, independent of the
design-matrix code used for estimation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .basis import GROUP_SLUG, equation_basis
from .calendar import DayGroup, HolidayCalendar, dst_mask
from .config import COMPONENTS, BasisConfig, LagSpec
from .ingest import HourlyPanel

DEFAULT_NATURAL = {"price": (40.0, 12.0), "load": (55000.0, 9000.0), "renewables": (14000.0, 3500.0)}


def _weekly_profile(level, amplitude, phase=14.0):
    """Coefficients of the weekly columns tracing a daily shape per day group."""
    coefs = {}
    sizes = {DayGroup.FULL_OFF: 6, DayGroup.SEMI_OFF: 6, DayGroup.PHASE_IN: 3, DayGroup.PHASE_OUT: 3, DayGroup.NORMAL: 5}
    for group, count in sizes.items():
        for s in range(count):
            hour = group.anchor_hour + 4 * s
            coefs[f"basis:weekly:{GROUP_SLUG[group]}:{s + 1}"] = level[group] + amplitude * np.cos(2 * np.pi * (hour - phase) / 24)
    return coefs


@dataclass
class TrueModel:
    """Data-generating parameters in model (standardized-like) units.

    ``mean[i]`` and ``tarch[i]`` map design / volatility labels to values;
    the volatility coefficients act on sigma directly.
    """

    lags: LagSpec
    mean: dict
    tarch: dict
    innovation: str = "gaussian"
    df: float = 5.0
    natural: dict | None = field(default_factory=lambda: dict(DEFAULT_NATURAL))
    basis: BasisConfig = field(default_factory=BasisConfig)

    @classmethod
    def demo(cls):
        """A stable seasonal three-equation system with asymmetric volatility."""
        lags = LagSpec(
            mean={
                "P": {"P": (1, 2, 24, 168), "L": (1, 24), "R": (1, 2)},
                "L": {"L": (1, 2, 24, 168), "R": (1,)},
                "R": {"R": (1, 2, 24)},
            },
            periodic={"P": (1,), "L": (1,), "R": (1,)},
            tarch={"P": (1, 2, 24), "L": (1, 2, 24), "R": (1, 2, 24)},
        )
        level = {DayGroup.FULL_OFF: -0.9, DayGroup.SEMI_OFF: -0.5, DayGroup.PHASE_IN: 0.0, DayGroup.PHASE_OUT: 0.0, DayGroup.NORMAL: 0.3}
        annual = {f"basis:annual:{h}": 0.15 * np.cos(2 * np.pi * h / 12) for h in range(1, 12)}
        mean_p = {"intercept": 0.1, "trend": -0.05, **_weekly_profile(level, 0.5), **annual}
        mean_p.update({"lag:P:1": 0.5, "lag:P:2": -0.1, "lag:P:24": 0.2, "lag:P:168": 0.1})
        mean_p.update({"lag:L:1": 0.15, "lag:L:24": -0.05, "lag:R:1": -0.25, "lag:R:2": 0.05})
        mean_p.update({"periodic:1:weekly:normal:2": 0.12, "periodic:1:weekly:full_off:1": -0.1})
        level_l = {k: 0.8 * v for k, v in level.items()}
        mean_l = {"intercept": 0.05, **_weekly_profile(level_l, 0.4, 13.0), **{k: 0.5 * v for k, v in annual.items()}}
        mean_l.update({"lag:L:1": 0.7, "lag:L:2": -0.15, "lag:L:24": 0.2, "lag:L:168": 0.05, "lag:R:1": -0.05})
        mean_l.update({"periodic:1:weekly:normal:3": 0.05})
        mean_r = {"intercept": -0.1, "basis:daily4xannual1": 0.5, "basis:daily5xannual1": 0.6, "basis:daily4xannual4": 0.3}
        mean_r.update({"lag:R:1": 0.8, "lag:R:2": -0.1, "lag:R:24": 0.15, "periodic:1:daily5xannual1": -0.05})
        tarch = {
            i: {"intercept": 0.25, "pos:1": 0.15, "neg:1": 0.06, "pos:2": 0.04, "neg:24": 0.03} for i in COMPONENTS
        }
        tarch["P"]["basis:weekly:normal:2"] = 0.08
        return cls(lags=lags, mean={"P": mean_p, "L": mean_l, "R": mean_r}, tarch=tarch)

    def draw(self, rng, size):
        if self.innovation == "gaussian":
            return rng.standard_normal(size)
        if self.innovation == "t":
            return rng.standard_t(self.df, size) * np.sqrt((self.df - 2) / self.df)
        raise ValueError(f"unknown innovation law {self.innovation!r}")


@dataclass
class Simulation:
    panel: HourlyPanel
    values: np.ndarray
    sigma: np.ndarray
    eps: np.ndarray
    z: np.ndarray


def _term_lists(true, bases, n):
    """Deterministic paths and (source, lag, coefficient-path) terms per equation."""
    det, terms, vol_det, vol_terms = {}, {}, {}, {}
    for idx, i in enumerate(COMPONENTS):
        B = bases[i]
        labels = list(B.labels)
        coefs = dict(true.mean.get(i, {}))
        d = np.full(n, coefs.pop("intercept", 0.0))
        d += coefs.pop("trend", 0.0) * np.arange(n) / max(n - 1, 1)
        lag_terms = []
        periodic = {}
        for label, value in coefs.items():
            kind, rest = label.split(":", 1)
            if kind == "basis":
                d += value * B.values[:, labels.index(rest)]
            elif kind == "lag":
                src, k = rest.split(":")
                lag_terms.append((COMPONENTS.index(src), int(k), np.full(n, value)))
            elif kind == "periodic":
                k, name = rest.split(":", 1)
                periodic.setdefault(int(k), np.zeros(n))
                periodic[int(k)] += value * B.values[:, labels.index(name)]
            else:
                raise ValueError(f"unknown coefficient label {label!r}")
        for k, path in periodic.items():
            lag_terms.append((idx, k, path))
        det[i], terms[i] = d, lag_terms

        vd = np.zeros(n)
        vt = []
        for label, value in true.tarch.get(i, {}).items():
            kind, rest = label.split(":", 1) if ":" in label else (label, "")
            if kind == "intercept":
                vd += value
            elif kind == "basis":
                vd += value * B.values[:, labels.index(rest)]
            elif kind in ("pos", "neg"):
                vt.append((kind == "pos", int(rest), value))
            else:
                raise ValueError(f"unknown volatility label {label!r}")
        vol_det[i], vol_terms[i] = vd, vt
    return det, terms, vol_det, vol_terms


def simulate(true, n, seed=0, start="2012-01-02 00:00", burn=None, timezone="Europe/Berlin", holidays=None):
    """Simulate ``n`` hours after a burn-in and return a natural-unit panel.

    Parameters
    ----------
    true : TrueModel
    n : int
        Hours kept after the burn-in.
    seed : int
    start : str
        Wall-clock time of the first kept hour.
    """
    maxlag = max(true.lags.max_lag, true.lags.max_tarch_lag)
    burn = 4 * maxlag + 500 if burn is None else burn
    total = n + burn
    stamps = pd.date_range(pd.Timestamp(start) - pd.Timedelta(hours=burn), periods=total, freq="h")
    dst = dst_mask(stamps, timezone)
    if holidays is None:
        holidays = HolidayCalendar.german(range(stamps[0].year, stamps[-1].year + 1))
    bases = {i: equation_basis(i, stamps, holidays, dst=dst, config=true.basis, timezone=timezone) for i in COMPONENTS}
    det, terms, vol_det, vol_terms = _term_lists(true, bases, total)

    rng = np.random.default_rng(seed)
    z = true.draw(rng, (total, 3))
    y = np.zeros((3, total))
    eps = np.zeros((3, total))
    sigma = np.zeros((3, total))
    for idx, i in enumerate(COMPONENTS):
        sigma[idx, :maxlag] = vol_det[i][:maxlag]
    for t in range(maxlag, total):
        for idx, i in enumerate(COMPONENTS):
            s = vol_det[i][t]
            for positive, k, a in vol_terms[i]:
                e = eps[idx, t - k]
                if positive and e > 0:
                    s += a * e
                elif not positive and e < 0:
                    s -= a * e
            sigma[idx, t] = s
            eps[idx, t] = s * z[t, idx]
            m = det[i][t]
            for src, k, path in terms[i]:
                m += path[t] * y[src, t - k]
            y[idx, t] = m + eps[idx, t]

    keep = slice(burn, total)
    values = y[:, keep]
    natural = values.copy()
    if true.natural is not None:
        for idx, name in enumerate(("price", "load", "renewables")):
            m, s = true.natural[name]
            natural[idx] = m + s * values[idx]
        natural[1:] = np.maximum(natural[1:], 0.0)
    panel = HourlyPanel(
        timestamps=stamps[keep],
        price=natural[0],
        load=natural[1],
        renewables=natural[2],
        wind=0.6 * natural[2],
        solar=0.4 * natural[2],
        dst=dst[keep],
        timezone=timezone,
    )
    return Simulation(panel, values, sigma[:, keep], eps[:, keep], z[keep])


def write_panel_csv(panel, path, timezone="Europe/Berlin", header=None):
    """Write a panel in the zone-aware input file format, with optional ``#`` header lines.

    A naive wall-clock panel is mapped back to instants: the skipped spring
    hour is dropped and the repeated autumn hour is written twice with the
    same values, so reading and normalizing restores the grid.
    """
    stamps = pd.DatetimeIndex(panel.timestamps)
    cols = {
        "price_eur_mwh": np.asarray(panel.price, dtype=float),
        "load_mw": np.asarray(panel.load, dtype=float),
        "wind_mw": np.asarray(panel.wind if panel.wind is not None else panel.renewables, dtype=float),
        "solar_mw": np.asarray(panel.solar, dtype=float) if panel.solar is not None else np.zeros(panel.n),
    }
    if stamps.tz is None:
        summer = stamps.tz_localize(timezone, ambiguous=True, nonexistent="NaT")
        winter = stamps.tz_localize(timezone, ambiguous=False, nonexistent="NaT")
        exists = ~summer.isna()
        twice = exists & (summer != winter)
        idx = np.concatenate([np.flatnonzero(exists), np.flatnonzero(twice)])
        instants = np.concatenate([summer[exists].tz_convert("UTC").asi8, winter[twice].tz_convert("UTC").asi8])
        order = np.argsort(instants, kind="stable")
        idx = idx[order]
        stamps = pd.DatetimeIndex(instants[order]).tz_localize("UTC").tz_convert(timezone)
        cols = {k: v[idx] for k, v in cols.items()}
    frame = pd.DataFrame({"timestamp": [t.isoformat() for t in stamps], **cols})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header or ():
            fh.write(f"# {line}\n")
        frame.to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")
    return path
