"""Reading hourly market data into a gapless, DST-normalized panel."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .calendar import dst_mask
from .errors import (
    AmbiguityUnresolvable,
    DegenerateSeries,
    MissingColumn,
    MissingInput,
    NonMonotonicTimestamps,
    UnparsableRow,
)

DEFAULT_SCHEMA = {
    "timestamp": "timestamp",
    "price": "price_eur_mwh",
    "load": "load_mw",
    "wind": "wind_mw",
    "solar": "solar_mw",
}

SERIES = ("price", "load", "renewables")
HOUR = pd.Timedelta(hours=1)


@dataclass(frozen=True)
class HourlyPanel:
    """Aligned hourly price, load and renewable feed-in.

    Before :func:`normalize_dst` the timestamps are zone-aware instants; after
    it they are naive local wall-clock hours on an exact hourly grid and
    ``dst`` flags the hours with summer time in force.
    """

    timestamps: pd.DatetimeIndex
    price: np.ndarray
    load: np.ndarray
    renewables: np.ndarray
    wind: np.ndarray | None = None
    solar: np.ndarray | None = None
    dst: np.ndarray | None = None
    timezone: str = "Europe/Berlin"
    standardization: dict | None = field(default=None)

    def __post_init__(self):
        n = len(self.timestamps)
        for name in SERIES + ("wind", "solar", "dst"):
            value = getattr(self, name)
            if value is not None and len(value) != n:
                raise ValueError(f"series {name} has length {len(value)}, expected {n}")

    @property
    def n(self):
        return len(self.timestamps)

    @property
    def is_normalized(self):
        return self.timestamps.tz is None

    def values(self):
        """Return the (3, n) array of price, load and renewables."""
        return np.vstack([self.price, self.load, self.renewables])

    def with_values(self, values, standardization=None):
        values = np.asarray(values, dtype=float)
        return replace(self, price=values[0], load=values[1], renewables=values[2], standardization=standardization)

    def slice(self, start, stop):
        sl = slice(start, stop)

        def cut(a):
            return None if a is None else np.array(a[sl])

        return replace(
            self,
            timestamps=self.timestamps[sl],
            price=cut(self.price),
            load=cut(self.load),
            renewables=cut(self.renewables),
            wind=cut(self.wind),
            solar=cut(self.solar),
            dst=cut(self.dst),
        )


def load_panel(path, schema=None, timezone="Europe/Berlin"):
    """Read a delimited hourly file into a zone-aware :class:`HourlyPanel`.

    Renewables are the sum of the wind and solar columns. Rows are sorted by
    instant; duplicated instants and gaps in the hourly cadence are rejected.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    try:
        raw = pd.read_csv(path, dtype=str, skipinitialspace=True, comment="#")
    except FileNotFoundError:
        raise MissingInput(str(path), "--data") from None
    for key in ("timestamp", "price", "load", "wind", "solar"):
        if schema[key] not in raw.columns:
            raise MissingColumn(key, schema[key])

    # header is line 1
    line = np.arange(len(raw)) + 2
    stamps = pd.to_datetime(raw[schema["timestamp"]], utc=True, format="ISO8601", errors="coerce")
    bad = stamps.isna().to_numpy()
    if bad.any():
        raise UnparsableRow(int(line[bad.argmax()]), "timestamp")
    numbers = {}
    for key in ("price", "load", "wind", "solar"):
        col = pd.to_numeric(raw[schema[key]], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(col)
        if bad.any():
            raise UnparsableRow(int(line[bad.argmax()]), schema[key])
        if key != "price" and (col < 0).any():
            raise UnparsableRow(int(line[(col < 0).argmax()]), f"negative {schema[key]}")
        numbers[key] = col

    instants = stamps.dt.tz_convert("UTC").dt.tz_localize(None).to_numpy()
    order = np.argsort(instants, kind="stable")
    utc = pd.DatetimeIndex(instants[order]).tz_localize("UTC")
    steps = np.diff(utc.asi8)
    if (steps <= 0).any():
        raise NonMonotonicTimestamps("duplicated timestamp at " + str(utc[1:][steps <= 0][0]))
    if (steps != HOUR.value).any():
        raise NonMonotonicTimestamps("non-hourly cadence after " + str(utc[:-1][steps != HOUR.value][0]))

    wind = numbers["wind"][order]
    solar = numbers["solar"][order]
    return HourlyPanel(
        timestamps=utc.tz_convert(timezone),
        price=numbers["price"][order],
        load=numbers["load"][order],
        renewables=wind + solar,
        wind=wind,
        solar=solar,
        timezone=timezone,
    )


def normalize_dst(panel):
    """Map a zone-aware panel onto a gapless local wall-clock grid.

    The repeated autumn hour keeps its first occurrence; the skipped spring
    hour is filled with the midpoint of its two neighbours. Already
    normalized panels are returned unchanged.
    """
    if panel.is_normalized:
        if panel.n > 1 and (np.diff(panel.timestamps.asi8) != HOUR.value).any():
            raise NonMonotonicTimestamps("normalized panel is not on an hourly grid")
        if panel.dst is None:
            return replace(panel, dst=dst_mask(panel.timestamps, panel.timezone))
        return panel

    aware = panel.timestamps
    wall = aware.tz_localize(None)
    summer = dst_mask(aware)

    dup = wall.duplicated(keep="first")
    if dup.any():
        counts = pd.Series(wall).value_counts()
        for stamp in wall[dup].unique():
            rows = np.flatnonzero(wall == stamp)
            if counts[stamp] != 2 or summer[rows[0]] == summer[rows[1]]:
                raise AmbiguityUnresolvable(f"{counts[stamp]} rows for wall-clock hour {stamp}")
    keep = ~dup
    wall = wall[keep]
    summer = summer[keep]
    arrays = {name: getattr(panel, name) for name in SERIES + ("wind", "solar")}
    arrays = {k: (None if v is None else np.asarray(v, dtype=float)[keep]) for k, v in arrays.items()}

    grid = pd.date_range(wall[0], wall[-1], freq="h")
    missing = grid.difference(wall)
    if len(missing):
        probe = missing.tz_localize(panel.timezone, nonexistent="NaT", ambiguous="NaT")
        if not probe.isna().all():
            raise AmbiguityUnresolvable(f"gap at {missing[~probe.isna()][0]} is not a DST transition")
    pos = grid.get_indexer(wall)
    if len(missing) and (np.diff(pos) > 2).any():
        raise AmbiguityUnresolvable("more than one consecutive missing hour at a DST transition")

    out = {}
    for name, values in arrays.items():
        if values is None:
            out[name] = None
            continue
        full = np.full(len(grid), np.nan)
        full[pos] = values
        holes = np.flatnonzero(np.isnan(full))
        full[holes] = 0.5 * (full[holes - 1] + full[holes + 1])
        out[name] = full
    flags = np.ones(len(grid), dtype=bool)
    flags[pos] = summer
    return replace(panel, timestamps=grid, dst=flags, **out)


def standardize(panel):
    """Replace each series by its z-score and record (mean, sd) for the way back."""
    if panel.n < 2:
        raise DegenerateSeries("need at least two observations")
    stats = {}
    values = {}
    for name in SERIES:
        y = np.asarray(getattr(panel, name), dtype=float)
        mean = float(y.mean())
        sd = float(y.std(ddof=1))
        if not sd > 0:
            raise DegenerateSeries(f"series {name} is constant")
        values[name] = (y - mean) / sd
        previous = (panel.standardization or {}).get(name)
        if previous is not None:
            m0, s0 = previous
            stats[name] = (m0 + s0 * mean, s0 * sd)
        else:
            stats[name] = (mean, sd)
    return replace(panel, standardization=stats, **values)


def apply_standardization(panel, stats):
    """Standardize a natural-unit panel with previously recorded (mean, sd) pairs."""
    if panel.standardization is not None:
        raise ValueError("panel is already standardized")
    values = {name: (np.asarray(getattr(panel, name), dtype=float) - stats[name][0]) / stats[name][1] for name in SERIES}
    return replace(panel, standardization={k: tuple(stats[k]) for k in SERIES}, **values)


def destandardize(panel):
    if panel.standardization is None:
        return panel
    stats = panel.standardization
    values = {name: stats[name][0] + stats[name][1] * np.asarray(getattr(panel, name)) for name in SERIES}
    return replace(panel, standardization=None, **values)


def prepare_panel(path, schema=None, timezone="Europe/Berlin"):
    """Load and DST-normalize a data file (natural units)."""
    return normalize_dst(load_panel(path, schema=schema, timezone=timezone))
