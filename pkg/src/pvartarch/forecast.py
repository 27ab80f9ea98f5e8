"""Recursive point forecasts and residual-bootstrap prediction bands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .basis import equation_basis
from .calendar import dst_mask, hours_since_epoch
from .config import COMPONENTS
from .design import build_design
from .errors import HistoryTooShort
from .ingest import SERIES, apply_standardization, normalize_dst

HOUR = pd.Timedelta(hours=1)


@dataclass(frozen=True)
class CompiledEquation:
    """Mean and volatility recursion of one equation over a fixed set of hours.

    ``sources``/``lags`` index the lagged values entering the mean with
    hour-specific coefficients ``coefs[term, h]``.
    """

    det: np.ndarray
    sources: np.ndarray
    lags: np.ndarray
    coefs: np.ndarray
    vol_det: np.ndarray
    vol_positive: np.ndarray
    vol_lags: np.ndarray
    vol_alpha: np.ndarray
    gamma: float
    floor: float
    constant_sigma: float | None


def compile_equation(params, basis, hours, trend, homoscedastic=False):
    """Turn sparse labelled coefficients into per-hour recursion arrays."""
    H = len(hours)
    B = basis.values
    names = list(basis.labels)
    det = np.zeros(H)
    lagc = {}
    for label, value in zip(params.labels, params.theta):
        if value == 0:
            continue
        kind, _, rest = label.partition(":")
        if kind == "intercept":
            det += value
        elif kind == "trend":
            det += value * (np.asarray(hours, dtype=float) - trend[0]) / trend[1]
        elif kind == "basis":
            det += value * B[:, names.index(rest)]
        elif kind == "lag":
            src, k = rest.split(":")
            key = (COMPONENTS.index(src), int(k))
            lagc[key] = lagc.get(key, 0.0) + value
        elif kind == "periodic":
            k, name = rest.split(":", 1)
            key = (COMPONENTS.index(params.component), int(k))
            lagc[key] = lagc.get(key, 0.0) + value * B[:, names.index(name)]
        else:
            raise ValueError(f"unknown coefficient label {label!r}")
    keys = sorted(lagc)
    coefs = np.array([np.broadcast_to(lagc[k], (H,)) for k in keys]).reshape(len(keys), H)
    sources = np.array([k[0] for k in keys], dtype=int)
    lags = np.array([k[1] for k in keys], dtype=int)

    vol_det = np.zeros(H)
    pos, vl, va = [], [], []
    for label, value in zip(params.tarch_labels, params.alpha_tilde):
        if value == 0:
            continue
        kind, _, rest = label.partition(":")
        if kind == "intercept":
            vol_det += value
        elif kind == "basis":
            vol_det += value * B[:, names.index(rest)]
        else:
            pos.append(kind == "pos")
            vl.append(int(rest))
            va.append(value)
    return CompiledEquation(
        det,
        sources,
        lags,
        coefs,
        vol_det,
        np.array(pos, dtype=bool),
        np.array(vl, dtype=int),
        np.array(va, dtype=float),
        float(params.gamma),
        float(params.sigma_floor),
        float(params.resid_sd) if homoscedastic else None,
    )


def _standardized_history(model, panel):
    panel = normalize_dst(panel)
    if model.standardization is not None and panel.standardization is None:
        panel = apply_standardization(panel, model.standardization)
    return panel


def horizon_stamps(panel, H):
    return pd.date_range(panel.timestamps[-1] + HOUR, periods=H, freq="h")


def _bases(model, stamps, holidays, dst=None):
    cfg = model.config
    if dst is None:
        dst = dst_mask(stamps, cfg.timezone)
    return {
        i: equation_basis(i, stamps, holidays, dst=dst, config=cfg.basis, precedence=cfg.phase_precedence, timezone=cfg.timezone, check_length=False)
        for i in COMPONENTS
    }


def one_step_residuals(model, panel, holidays, start=None):
    """In-sample one-step residuals (standardized units) of each equation on ``panel``.

    Returns
    -------
    rows : ndarray
        Panel indices of the residuals.
    eps : ndarray, shape (3, len(rows))
    """
    panel = _standardized_history(model, panel)
    holidays.require(panel.timestamps, "history")
    lags = model.lags
    start = lags.max_lag if start is None else start
    if start < lags.max_lag or panel.n - start < 1:
        raise HistoryTooShort(f"history of {panel.n} hours is shorter than the largest lag {lags.max_lag}")
    offset = start - lags.max_lag
    if offset:
        panel = panel.slice(offset, panel.n)
    bases = _bases(model, panel.timestamps, holidays, panel.dst)
    systems = build_design(panel.values(), bases, lags, hours_since_epoch(panel.timestamps), start=lags.max_lag, trend=model.trend)
    eps = np.vstack([systems[i].y - systems[i].X @ model.equations[i].theta for i in COMPONENTS])
    return systems["P"].rows + offset, eps


@dataclass
class ForecastBands:
    timestamps: pd.DatetimeIndex
    point: np.ndarray
    quantiles: dict
    coverages: tuple
    n_mc: int
    seed: int | None

    @property
    def H(self):
        return len(self.timestamps)

    def lower(self, coverage):
        return self.quantiles[quantile_names(coverage)[0]]

    def upper(self, coverage):
        return self.quantiles[quantile_names(coverage)[1]]

    def to_frame(self):
        rows = []
        names = [n for c in self.coverages for n in quantile_names(c)]
        for h in range(self.H):
            for idx, name in enumerate(SERIES):
                row = {"h": h + 1, "timestamp": self.timestamps[h].strftime("%Y-%m-%dT%H:%M"), "component": name, "point": self.point[idx, h]}
                for q in names:
                    row[q] = self.quantiles[q][idx, h]
                rows.append(row)
        return pd.DataFrame(rows, columns=["h", "timestamp", "component", "point"] + names)


def _percent_label(p):
    s = f"{p:g}".replace(".", "")
    return "q" + ("0" + s if p < 10 else s)


def quantile_names(coverage):
    """Column names of the lower and upper quantile of a central band (coverage in %)."""
    lo = (100.0 - coverage) / 2
    return _percent_label(round(lo, 6)), _percent_label(round(100.0 - lo, 6))


class _Recursion:
    """Shared state of the joint three-equation recursion over many paths."""

    def __init__(self, model, panel, H, holidays, need_eps):
        lags = model.lags
        self.maxlag = lags.max_lag
        self.maxj = lags.max_tarch_lag
        need = self.maxlag + (self.maxj if need_eps else 0)
        if panel.n < max(need, 1):
            raise HistoryTooShort(f"history of {panel.n} hours, at least {need} needed")
        panel = _standardized_history(model, panel)
        stamps = horizon_stamps(panel, H)
        holidays.require(stamps, "forecast horizon")
        hours = hours_since_epoch(stamps)
        bases = _bases(model, stamps, holidays)
        self.eqs = [compile_equation(model.equations[i], bases[i], hours, model.trend, model.homoscedastic) for i in COMPONENTS]
        self.stamps = stamps
        self.H = H
        self.panel = panel
        self.values = panel.values()[:, panel.n - self.maxlag :] if self.maxlag else np.zeros((3, 0))
        self.tail_eps = None
        if need_eps and self.maxj:
            _, eps = one_step_residuals(model, panel, holidays, start=panel.n - self.maxj)
            self.tail_eps = eps

    def run(self, shocks=None):
        """Iterate the system; ``shocks`` has shape (paths, H, 3) or is None for the point path."""
        paths = 1 if shocks is None else shocks.shape[0]
        L, J, H = self.maxlag, self.maxj, self.H
        Y = np.zeros((paths, 3, L + H))
        Y[:, :, :L] = self.values
        if shocks is not None:
            pos = np.zeros((paths, 3, J + H))
            neg = np.zeros((paths, 3, J + H))
            if J:
                pos[:, :, :J] = np.maximum(self.tail_eps, 0.0)
                neg[:, :, :J] = np.maximum(-self.tail_eps, 0.0)
        for h in range(H):
            t = L + h
            for idx, eq in enumerate(self.eqs):
                m = np.full(paths, eq.det[h])
                if eq.lags.size:
                    m += Y[:, eq.sources, t - eq.lags] @ eq.coefs[:, h]
                if shocks is not None:
                    if eq.constant_sigma is not None:
                        sigma = np.full(paths, eq.constant_sigma)
                    else:
                        s = np.full(paths, eq.vol_det[h])
                        if eq.vol_lags.size:
                            tj = J + h - eq.vol_lags
                            src = np.where(eq.vol_positive[None, :], pos[:, idx, tj], neg[:, idx, tj])
                            s += src @ eq.vol_alpha
                        sigma = np.maximum(s / eq.gamma, eq.floor)
                    e = sigma * shocks[:, h, idx]
                    pos[:, idx, J + h] = np.maximum(e, 0.0)
                    neg[:, idx, J + h] = np.maximum(-e, 0.0)
                    m = m + e
                Y[:, idx, t] = m
        return Y[:, :, L:]

    def natural(self, Y, model):
        stdz = model.standardization
        if stdz is None:
            return Y
        m = np.array([stdz[name][0] for name in SERIES])
        s = np.array([stdz[name][1] for name in SERIES])
        return m[:, None] + s[:, None] * Y


def forecast_point(model, panel, H, holidays):
    """Deterministic recursion with future shocks set to zero (natural units, shape (3, H))."""
    rec = _Recursion(model, panel, H, holidays, need_eps=False)
    return rec.natural(rec.run()[0], model), rec.stamps


def forecast_bands(model, panel, H, holidays, coverages=(90, 99), n_mc=1000, seed=0, return_paths=False):
    """Point forecast plus Monte-Carlo quantile bands.

    Each path resamples whole rows of the standardized residuals (keeping
    the contemporaneous dependence between equations) from its own
    substream of ``seed``.
    """
    rec = _Recursion(model, panel, H, holidays, need_eps=n_mc > 0)
    point = rec.natural(rec.run()[0], model)
    quantiles = {}
    paths = None
    coverages = tuple(float(c) for c in coverages)
    if n_mc > 0:
        z = np.asarray(model.z, dtype=float)
        z = z[np.isfinite(z).all(axis=1)]
        children = np.random.SeedSequence(seed).spawn(n_mc)
        idx = np.stack([np.random.default_rng(c).integers(0, z.shape[0], size=H) for c in children])
        shocks = z[idx]
        nat = rec.run(shocks)
        stdz = model.standardization
        if stdz is not None:
            for k, name in enumerate(SERIES):
                nat[:, k] = stdz[name][0] + stdz[name][1] * nat[:, k]
        for c in coverages:
            lo_name, hi_name = quantile_names(c)
            lo = (100.0 - c) / 200.0
            quantiles[lo_name] = np.quantile(nat, lo, axis=0)
            quantiles[hi_name] = np.quantile(nat, 1.0 - lo, axis=0)
        paths = nat if return_paths else None
    bands = ForecastBands(rec.stamps, point, quantiles, coverages if n_mc > 0 else (), int(n_mc), seed)
    if return_paths:
        return bands, paths
    return bands


def write_forecast(bands, path, header=None):
    """Write a forecast table with ``#`` header lines and fixed float formatting."""
    frame = bands.to_frame()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header or ():
            fh.write(f"# {line}\n")
        frame.to_csv(fh, index=False, float_format="%.6f", lineterminator="\n")
    return path
