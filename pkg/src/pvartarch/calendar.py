"""Day groups, holiday calendars and the summer-time hour set."""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import pandas as pd

from .errors import HolidayCoverage, MissingInput

EPOCH = pd.Timestamp("2000-01-01 00:00")


class DayGroup(enum.IntEnum):
    FULL_OFF = 1
    SEMI_OFF = 2
    PHASE_IN = 3
    PHASE_OUT = 4
    NORMAL = 5

    @property
    def unique_hours(self):
        return {1: 24, 2: 24, 3: 12, 4: 12, 5: 24}[int(self)]

    @property
    def anchor_hour(self):
        """Wall-clock hour at which the group's first basis function is centred."""
        return 12 if self in (DayGroup.PHASE_IN, DayGroup.NORMAL) else 0


def easter_sunday(year):
    """Gregorian Easter date (anonymous computus)."""
    a = year % 19
    b, c = divmod(year, 100)
    d, e = divmod(b, 4)
    f = (b + 8) // 25
    g = (b - f + 1) // 3
    h = (19 * a + b - d - g + 15) % 30
    i, k = divmod(c, 4)
    l = (32 + 2 * e + 2 * i - h - k) % 7
    m = (a + 11 * h + 22 * l) // 451
    month, day = divmod(h + l - 7 * m + 114, 31)
    return dt.date(year, month, day + 1)


def german_holidays(year):
    """National and >=25%-population regional holidays of one year.

    Christmas Eve and New Year's Eve are listed as regional.
    """
    easter = easter_sunday(year)
    national = [
        (dt.date(year, 1, 1), "Neujahr"),
        (easter - dt.timedelta(days=2), "Karfreitag"),
        (easter + dt.timedelta(days=1), "Ostermontag"),
        (dt.date(year, 5, 1), "Tag der Arbeit"),
        (easter + dt.timedelta(days=39), "Christi Himmelfahrt"),
        (easter + dt.timedelta(days=50), "Pfingstmontag"),
        (dt.date(year, 10, 3), "Tag der Deutschen Einheit"),
        (dt.date(year, 12, 25), "1. Weihnachtstag"),
        (dt.date(year, 12, 26), "2. Weihnachtstag"),
    ]
    if year == 2017:
        national.append((dt.date(year, 10, 31), "Reformationstag"))
    regional = [
        (dt.date(year, 1, 6), "Heilige Drei Koenige"),
        (easter + dt.timedelta(days=60), "Fronleichnam"),
        (dt.date(year, 11, 1), "Allerheiligen"),
        (dt.date(year, 12, 24), "Heiligabend"),
        (dt.date(year, 12, 31), "Silvester"),
    ]
    return national, regional


@dataclass(frozen=True)
class HolidayCalendar:
    national: frozenset = field(default_factory=frozenset)
    regional: frozenset = field(default_factory=frozenset)
    years: frozenset = field(default_factory=frozenset)
    names: dict = field(default_factory=dict, compare=False)

    @classmethod
    def german(cls, years):
        national, regional, names = set(), set(), {}
        for year in years:
            nat, reg = german_holidays(year)
            for day, name in nat:
                national.add(day)
                names[day] = name
            for day, name in reg:
                regional.add(day)
                names.setdefault(day, name)
        return cls(frozenset(national), frozenset(regional - national), frozenset(years), names)

    @classmethod
    def from_file(cls, path):
        """Read ``date,kind,name`` rows; covered years run from the first to the last listed year."""
        try:
            table = pd.read_csv(path, dtype=str, comment="#", skipinitialspace=True)
        except FileNotFoundError:
            raise MissingInput(str(path), "--holidays") from None
        missing = {"date", "kind"} - set(table.columns)
        if missing:
            raise ValueError(f"holiday file lacks columns {sorted(missing)}")
        national, regional, names = set(), set(), {}
        for row, record in enumerate(table.itertuples(index=False), start=2):
            try:
                day = dt.date.fromisoformat(record.date.strip())
            except ValueError:
                raise ValueError(f"holiday file row {row}: bad date {record.date!r}") from None
            kind = record.kind.strip().lower()
            if kind == "national":
                national.add(day)
            elif kind == "regional":
                regional.add(day)
            else:
                raise ValueError(f"holiday file row {row}: kind must be national or regional")
            names[day] = getattr(record, "name", "") or ""
        days = national | regional
        years = frozenset(range(min(d.year for d in days), max(d.year for d in days) + 1)) if days else frozenset()
        return cls(frozenset(national), frozenset(regional - national), years, names)

    @classmethod
    def bundled(cls):
        """The shipped 2010-2014 German calendar."""
        with resources.as_file(resources.files("pvartarch") / "data" / "holidays_de.csv") as path:
            return cls.from_file(path)

    def covers(self, years):
        return set(years) <= set(self.years)

    def require(self, timestamps, what="sample"):
        years = set(pd.DatetimeIndex(timestamps).year)
        uncovered = sorted(years - set(self.years))
        if uncovered:
            raise HolidayCoverage(f"holiday calendar does not cover {what} year(s) {uncovered}")

    def to_frame(self):
        rows = [(d.isoformat(), "national", self.names.get(d, "")) for d in sorted(self.national)]
        rows += [(d.isoformat(), "regional", self.names.get(d, "")) for d in sorted(self.regional)]
        return pd.DataFrame(rows, columns=["date", "kind", "name"]).sort_values("date", kind="stable")


def dst_mask(timestamps, timezone=None):
    """Boolean mask of hours with summer time in force.

    Zone-aware input is read directly. Naive wall-clock input is localized in
    ``timezone``; the repeated autumn hour counts as summer time (its first
    occurrence is the one kept by DST normalization) and an inserted spring
    hour as summer time.
    """
    stamps = pd.DatetimeIndex(timestamps)
    if stamps.tz is None:
        if timezone is None:
            raise ValueError("naive timestamps need a timezone")
        stamps = stamps.tz_localize(timezone, ambiguous=np.ones(len(stamps), dtype=bool), nonexistent="shift_forward")
    offsets = np.fromiter((t.dst().total_seconds() for t in stamps), dtype=float, count=len(stamps))
    return offsets != 0


def hours_since_epoch(timestamps):
    """Wall-clock hour index relative to 2000-01-01 00:00 (naive timestamps)."""
    stamps = pd.DatetimeIndex(timestamps)
    if stamps.tz is not None:
        stamps = stamps.tz_localize(None)
    return ((stamps - EPOCH) // pd.Timedelta(hours=1)).to_numpy(dtype=np.int64)


def _day_status(days, holidays):
    """0 = working day, 1 = full off, 2 = semi off."""
    status = np.zeros(len(days), dtype=np.int8)
    for n, day in enumerate(days):
        if day.weekday() == 6 or day in holidays.national:
            status[n] = DayGroup.FULL_OFF
        elif day.weekday() == 5 or day in holidays.regional:
            status[n] = DayGroup.SEMI_OFF
    return status


def _classify_days(days, holidays, precedence="in", phase=12):
    """Per-day (len(days), 24) group table."""
    status = _day_status(days, holidays)
    table = np.full((len(days), 24), int(DayGroup.NORMAL), dtype=np.int8)
    for n in range(len(days)):
        if status[n]:
            table[n, :] = status[n]
            continue
        before = n + 1 < len(days) and status[n + 1] > 0
        after = n > 0 and status[n - 1] > 0
        late = slice(24 - phase, 24)
        early = slice(0, phase)
        if precedence == "in":
            if after:
                table[n, early] = DayGroup.PHASE_OUT
            if before:
                table[n, late] = DayGroup.PHASE_IN
        else:
            if before:
                table[n, late] = DayGroup.PHASE_IN
            if after:
                table[n, early] = DayGroup.PHASE_OUT
    return table


@dataclass(frozen=True)
class DayGroupCalendar:
    """Group label of every hour plus the anchor hours of each group.

    ``time_sets[g]`` holds hour indices relative to the first timestamp and
    may extend a couple of days beyond the sample on either side so that
    splines straddling the edges are complete.
    """

    groups: np.ndarray
    time_sets: dict
    dst_set: np.ndarray
    origin: int

    @property
    def n(self):
        return len(self.groups)

    def anchors(self, group):
        """Anchor hours of ``group`` on the epoch-based hour axis."""
        return self.time_sets[DayGroup(group)] + self.origin


def classify_hours(timestamps, holidays, dst=None, precedence="in", margin_days=3, timezone="Europe/Berlin"):
    """Assign each wall-clock hour to one of the five day groups."""
    stamps = pd.DatetimeIndex(timestamps)
    if stamps.tz is not None:
        stamps = stamps.tz_localize(None)
    if len(stamps) == 0:
        return DayGroupCalendar(np.zeros(0, np.int8), {g: np.zeros(0, np.int64) for g in DayGroup}, np.zeros(0, np.int64), 0)
    first = stamps[0].normalize()
    last = stamps[-1].normalize()
    days = [d.date() for d in pd.date_range(first - pd.Timedelta(days=margin_days), last + pd.Timedelta(days=margin_days), freq="D")]
    table = _classify_days(days, holidays, precedence)

    origin = int(hours_since_epoch(stamps[:1])[0])
    day0 = int(hours_since_epoch(pd.DatetimeIndex([pd.Timestamp(days[0])]))[0])
    hour_axis = day0 + np.arange(len(days) * 24)
    idx = hours_since_epoch(stamps) - day0
    groups = table.reshape(-1)[idx]

    time_sets = build_time_sets(table, hour_axis - origin)
    if dst is None:
        dst = dst_mask(stamps, timezone)
    return DayGroupCalendar(groups=groups, time_sets=time_sets, dst_set=np.flatnonzero(dst), origin=origin)


def build_time_sets(table, hour_index):
    """Anchor indices per group from a (days, 24) group table.

    Off days and phase-out anchor at hour 0 of the day, phase-in and normal
    at hour 12, provided that hour belongs to the group.
    """
    hour_index = np.asarray(hour_index).reshape(table.shape)
    sets = {}
    for group in DayGroup:
        h = group.anchor_hour
        hit = table[:, h] == group
        sets[group] = hour_index[hit, h].astype(np.int64)
    return sets
