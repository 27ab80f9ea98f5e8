"""Deterministic B-spline bases: weekly day-group splines, annual splines and
daily x annual interactions with the summer-time shift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .calendar import DayGroup, classify_hours, dst_mask, hours_since_epoch
from .config import BasisConfig
from .errors import SampleTooShort

# functions per day group and cumulative offsets; the last group loses one
# column so that the weekly block plus intercept is not collinear
GROUP_SIZES = {DayGroup.FULL_OFF: 6, DayGroup.SEMI_OFF: 6, DayGroup.PHASE_IN: 3, DayGroup.PHASE_OUT: 3, DayGroup.NORMAL: 6}
GROUP_SLUG = {
    DayGroup.FULL_OFF: "full_off",
    DayGroup.SEMI_OFF: "semi_off",
    DayGroup.PHASE_IN: "phase_in",
    DayGroup.PHASE_OUT: "phase_out",
    DayGroup.NORMAL: "normal",
}


def group_offsets(sizes=None):
    """Cumulative column offsets ``C`` and first-of-group indices (1-based)."""
    sizes = GROUP_SIZES if sizes is None else sizes
    counts = [sizes[g] for g in DayGroup]
    offsets = np.concatenate([[0], np.cumsum(counts)])
    offsets[-1] -= 1
    first = offsets[:-1] + 1
    return offsets, first


def cox_de_boor(x, knots, degree):
    """Evaluate the single B-spline on ``knots`` (length degree + 2) at ``x``.

    Plain Cox-de Boor recursion on half-open knot intervals.
    """
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    m = degree + 1
    # zeroth-degree indicators for the m intervals
    basis = [((x >= knots[i]) & (x < knots[i + 1])).astype(float) for i in range(m)]
    for d in range(1, degree + 1):
        nxt = []
        for i in range(m - d):
            left = (x - knots[i]) / (knots[i + d] - knots[i]) * basis[i]
            right = (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]) * basis[i + 1]
            nxt.append(left + right)
        basis = nxt
    return basis[0]


def cardinal_bspline(u, degree=3):
    """Cardinal B-spline with unit knot spacing centred at zero."""
    half = (degree + 1) / 2
    return cox_de_boor(u, np.arange(degree + 2) - half, degree)


@dataclass(frozen=True)
class BSplineSpec:
    """Cardinal B-spline of given degree and knot distance centred at ``center``."""

    center: float
    knot_distance: float
    degree: int = 3

    @property
    def knots(self):
        half = (self.degree + 1) / 2
        return self.center + self.knot_distance * (np.arange(self.degree + 2) - half)

    @property
    def half_width(self):
        return self.knot_distance * (self.degree + 1) / 2

    def __call__(self, t):
        return eval_bspline(self, t)


def eval_bspline(spec, t):
    return cardinal_bspline((np.asarray(t, dtype=float) - spec.center) / spec.knot_distance, spec.degree)


def periodic_bspline(t, center, knot_distance, period, degree=3):
    """Sum over k of splines centred at ``center + k * period``."""
    t = np.asarray(t, dtype=float)
    half = knot_distance * (degree + 1) / 2
    u = np.mod(t - center + period / 2, period) - period / 2
    reach = int(np.ceil(half / period))
    out = np.zeros_like(u)
    for k in range(-reach, reach + 1):
        out += cardinal_bspline((u + k * period) / knot_distance, degree)
    return out


def anchor_sum(t, anchors, knot_distance, degree=3):
    """Evaluate sum_a B(t - a) for sorted anchor hours ``a``."""
    t = np.asarray(t, dtype=float)
    anchors = np.sort(np.asarray(anchors, dtype=float))
    out = np.zeros_like(t)
    if anchors.size == 0:
        return out
    half = knot_distance * (degree + 1) / 2
    lo = np.searchsorted(anchors, t - half, side="right")
    hi = np.searchsorted(anchors, t + half, side="left")
    for step in range(int((hi - lo).max(initial=0))):
        idx = lo + step
        live = idx < hi
        if not live.any():
            break
        a = anchors[np.minimum(idx, anchors.size - 1)]
        out += np.where(live, cardinal_bspline((t - a) / knot_distance, degree), 0.0)
    return out


@dataclass(frozen=True)
class BasisMatrix:
    """Evaluated deterministic basis of one equation (spline columns only)."""

    values: np.ndarray
    labels: tuple
    component: str

    @property
    def shape(self):
        return self.values.shape

    def column(self, label):
        return self.values[:, self.labels.index(label)]

    def slice(self, start, stop):
        return BasisMatrix(self.values[start:stop], self.labels, self.component)


def weekly_group_basis(cal, hours=None, config=None, check_length=True):
    """The 23 weekly day-group columns.

    Parameters
    ----------
    cal : DayGroupCalendar
    hours : array_like, optional
        Evaluation hours on the epoch axis; defaults to the calendar's own hours.
    """
    config = config or BasisConfig()
    if hours is None:
        hours = cal.origin + np.arange(cal.n)
    hours = np.asarray(hours, dtype=float)
    if check_length and hours.size < 168:
        raise SampleTooShort(f"weekly basis needs at least 168 hours, got {hours.size}")
    d = config.weekly_knot_distance
    offsets, _ = group_offsets()
    columns, labels = [], []
    for g, group in enumerate(DayGroup):
        anchors = cal.anchors(group).astype(float)
        for s in range(offsets[g + 1] - offsets[g]):
            columns.append(anchor_sum(hours, anchors + s * d, d, config.degree))
            labels.append(f"weekly:{GROUP_SLUG[group]}:{s + 1}")
    return np.column_stack(columns), labels


def annual_basis(hours, component, config=None):
    """Annual periodic splines; for price and load the last shift is omitted."""
    config = config or BasisConfig()
    d = config.annual_knot_distance(component)
    count = config.annual_count_renewables if component == "R" else config.annual_count
    columns = [periodic_bspline(hours, h * d, d, config.annual_period, config.degree) for h in range(count - 1)]
    return np.column_stack(columns), [f"annual:{h + 1}" for h in range(count - 1)]


def daily_basis(hours, config=None):
    config = config or BasisConfig()
    d = config.daily_knot_distance
    columns = [periodic_bspline(hours, h * d, d, config.daily_period, config.degree) for h in range(config.daily_count)]
    return np.column_stack(columns)


def daily_annual_interaction_basis(hours, config=None):
    """Products of daily and annual factors, excluding the all-constant pair.

    Factor 1 of each set is the constant one; factor h >= 2 is the spline
    centred at (h - 2) knot distances. Column j (1-based) pairs daily factor
    ``j mod eta_daily + 1`` with annual factor ``j div eta_annual + 1``.
    """
    config = config or BasisConfig()
    hours = np.asarray(hours, dtype=float)
    eta_d = config.daily_count
    eta_a = config.annual_count_renewables
    ones = np.ones((hours.size, 1))
    daily = np.hstack([ones, daily_basis(hours, config)[:, : eta_d - 1]])
    d_a = config.annual_knot_distance("R")
    annual = np.hstack(
        [ones]
        + [periodic_bspline(hours, h * d_a, d_a, config.annual_period, config.degree)[:, None] for h in range(eta_a - 1)]
    )
    columns, labels = [], []
    for j in range(1, eta_d * eta_a):
        h1 = j % eta_d + 1
        h2 = j // eta_a + 1
        columns.append(daily[:, h1 - 1] * annual[:, h2 - 1])
        labels.append(f"daily{h1}xannual{h2}")
    return np.column_stack(columns), labels


def dst_shift_hours(hours, dst, shift=1):
    """Evaluation hours for the renewable basis: summer hours move by ``shift``."""
    hours = np.asarray(hours, dtype=float)
    if dst is None:
        return hours
    return hours + shift * np.asarray(dst, dtype=bool)


def dst_shift_renewable_basis(evaluate, hours, dst, shift=1):
    """Apply the summer-time shift to a basis evaluator ``evaluate(hours) -> columns``."""
    return evaluate(dst_shift_hours(hours, dst, shift))


def equation_basis(component, timestamps, holidays, dst=None, config=None, precedence="in", timezone="Europe/Berlin", check_length=True):
    """Spline block of the mean (and volatility) equation of ``component``.

    Price and load: 23 weekly day-group columns and the annual columns.
    Renewables: daily x annual interactions evaluated with the summer shift.
    """
    config = config or BasisConfig()
    stamps = pd.DatetimeIndex(timestamps)
    hours = hours_since_epoch(stamps).astype(float)
    if component == "R":
        if dst is None:
            dst = dst_mask(stamps, timezone)
        values, labels = dst_shift_renewable_basis(
            lambda h: daily_annual_interaction_basis(h, config), hours, dst, config.dst_shift
        )
        return BasisMatrix(values, tuple(labels), component)
    cal = classify_hours(stamps, holidays, dst=np.zeros(len(stamps), bool), precedence=precedence)
    weekly, wl = weekly_group_basis(cal, hours, config, check_length=check_length)
    annual, al = annual_basis(hours, component, config)
    return BasisMatrix(np.hstack([weekly, annual]), tuple(wl + al), component)


def dump_basis(path, timestamps, bases):
    """Write basis matrices to a labelled CSV (one block per equation)."""
    columns = {"timestamp": pd.DatetimeIndex(timestamps).strftime("%Y-%m-%dT%H:%M")}
    for basis in bases:
        for k, label in enumerate(basis.labels):
            columns[f"{basis.component}:{label}"] = basis.values[:, k]
    frame = pd.DataFrame(columns)
    frame.to_csv(path, index=False, float_format="%.10g")
    return path
