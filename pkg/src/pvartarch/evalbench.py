"""Benchmarks, forecast-error metrics and the rolling-origin study."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import SampleTooShort

MODELS = ("pvartarch", "pvar", "ar", "var", "persistent")
SUMMARY_HORIZONS = (1, 4, 8, 12, 16, 20, 24, 168, 672)
WEEK = 168


# ------------------------------------------------------------- persistence


def persistent_forecast(y, H, period=WEEK):
    """Weekly persistence: value one period earlier, recursively beyond one period."""
    y = np.asarray(y, dtype=float)
    if y.size < period:
        raise SampleTooShort(f"need {period} observations for persistence")
    path = np.concatenate([y[-period:], np.empty(H)])
    for h in range(H):
        path[period + h] = path[h]
    return path[period:]


# ----------------------------------------------------------- Yule-Walker


def hour_of_week(timestamps):
    stamps = pd.DatetimeIndex(timestamps)
    return (stamps.dayofweek * 24 + stamps.hour).to_numpy()


def autocovariances(x, max_lag):
    """Biased sample autocovariances ``G[k] = (1/n) sum x_t x_{t-k}'`` for k = 0..max_lag."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    x = x - x.mean(axis=0)
    d = x.shape[1]
    # FFT-based products for long lag ranges
    m = 1 << int(np.ceil(np.log2(2 * n)))
    F = np.fft.rfft(x, m, axis=0)
    out = np.empty((max_lag + 1, d, d))
    for i in range(d):
        for j in range(d):
            out[:, i, j] = np.fft.irfft(F[:, i] * np.conj(F[:, j]), m)[: max_lag + 1] / n
    return out


def levinson_durbin(gamma, p_max):
    """All AR orders 0..p_max from autocovariances.

    Returns
    -------
    coefs : list of ndarray
        ``coefs[p]`` holds the order-p coefficients.
    variances : ndarray
        Innovation variance per order.
    """
    g = np.asarray(gamma, dtype=float).reshape(-1)
    v = np.empty(p_max + 1)
    v[0] = g[0]
    a = np.zeros(0)
    coefs = [a]
    for p in range(1, p_max + 1):
        k = (g[p] - a @ g[p - 1 : 0 : -1]) / v[p - 1] if p > 1 else g[1] / v[0]
        a = np.concatenate([a - k * a[::-1], [k]])
        v[p] = v[p - 1] * (1 - k * k)
        coefs.append(a)
    return coefs, v


def whittle(gamma, p_max):
    """Multichannel Levinson (Whittle) recursion for all VAR orders 0..p_max.

    ``gamma[k] = E x_t x_{t-k}'``. Returns forward coefficient stacks
    ``A[p]`` of shape (p, d, d) and innovation covariances ``V[p]``.
    """
    G = np.asarray(gamma, dtype=float)
    d = G.shape[1]
    A = np.zeros((0, d, d))
    B = np.zeros((0, d, d))
    V = G[0].copy()
    U = G[0].copy()
    coefs, covs = [A], [V.copy()]
    for p in range(1, p_max + 1):
        # E[(x_t - sum A_k x_{t-k}) x_{t-p}'] under the order p-1 fit
        delta = G[p] - np.einsum("kij,kjl->il", A, G[p - 1 : 0 : -1]) if p > 1 else G[1].copy()
        Ap = delta @ np.linalg.inv(U)
        Bp = delta.T @ np.linalg.inv(V)
        A_new = A - np.einsum("ij,kjl->kil", Ap, B[::-1])
        B_new = B - np.einsum("ij,kjl->kil", Bp, A[::-1])
        A = np.concatenate([A_new, Ap[None]])
        B = np.concatenate([B_new, Bp[None]])
        V = V - Ap @ delta.T
        U = U - Bp @ delta
        coefs.append(A)
        covs.append(V.copy())
    return coefs, covs


@dataclass
class MeanAdjustedAR:
    """Hour-of-week mean plus a Yule-Walker (V)AR on the remainder."""

    means: np.ndarray
    coefs: np.ndarray
    order: int
    aic: np.ndarray
    sigma: np.ndarray

    @property
    def dims(self):
        return self.means.shape[1]

    def forecast(self, y, timestamps, H):
        """Forecast ``H`` steps after the last row of ``y`` (shape (n, d))."""
        y = np.asarray(y, dtype=float).reshape(len(timestamps), -1)
        slots = hour_of_week(timestamps)
        x = y - self.means[slots]
        p = self.order
        future = pd.date_range(pd.DatetimeIndex(timestamps)[-1] + pd.Timedelta(hours=1), periods=H, freq="h")
        buf = np.vstack([x[len(x) - p :] if p else np.zeros((0, x.shape[1])), np.zeros((H, x.shape[1]))])
        for h in range(H):
            t = p + h
            if p:
                past = buf[t - p : t][::-1]
                buf[t] = np.einsum("kij,kj->i", self.coefs, past)
        return buf[p:] + self.means[hour_of_week(future)]


def fit_mean_adjusted_ar(y, timestamps, p_max):
    """Weekly-mean removal followed by AIC-selected Yule-Walker (V)AR.

    Parameters
    ----------
    y : ndarray, shape (n,) or (n, d)
    timestamps : sequence of hourly timestamps
    p_max : int
        Largest order considered; reduced (with a warning) to below n/2.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = y.shape
    slots = hour_of_week(timestamps)
    means = np.zeros((WEEK, d))
    for s in range(WEEK):
        hit = slots == s
        if hit.any():
            means[s] = y[hit].mean(axis=0)
    x = y - means[slots]
    if n < 4:
        raise SampleTooShort("too few observations for an autoregression")
    if p_max >= n / 2:
        reduced = max(int(np.ceil(n / 2)) - 1, 0)
        warnings.warn(f"maximal order {p_max} reduced to {reduced} for {n} observations", RuntimeWarning, stacklevel=2)
        p_max = reduced
    G = autocovariances(x, p_max)
    if d == 1:
        coefs, v = levinson_durbin(G[:, 0, 0], p_max)
        logdet = np.log(np.maximum(v, 1e-300))
        stacks = [c.reshape(-1, 1, 1) for c in coefs]
        sig = [np.array([[s]]) for s in v]
    else:
        stacks, sig = whittle(G, p_max)
        logdet = np.array([np.linalg.slogdet(s)[1] for s in sig])
    # the weekly means are not counted as parameters
    aic = n * logdet + 2 * np.arange(p_max + 1) * d * d
    order = int(np.argmin(aic))
    return MeanAdjustedAR(means, stacks[order], order, aic, sig[order])


# ------------------------------------------------------------------ metrics


def mae(actual, predicted):
    """Per-horizon mean absolute error over forecast origins (rows)."""
    err = np.abs(np.asarray(actual, dtype=float) - np.asarray(predicted, dtype=float))
    return err.reshape(-1, err.shape[-1]).mean(axis=0)


def mmae(mae_h):
    """Running mean of MAE over horizons 1..h."""
    mae_h = np.asarray(mae_h, dtype=float)
    return np.cumsum(mae_h) / np.arange(1, mae_h.size + 1)


# ------------------------------------------------------------ rolling study


def rolling_origins(timestamps, window, H, step=24, end_hour=23):
    """Index of the last in-window observation for every admissible origin."""
    stamps = pd.DatetimeIndex(timestamps)
    n = len(stamps)
    if n < window + H:
        raise SampleTooShort(f"{n} hours cannot hold a {window}-hour window and {H} forecast hours")
    hours = stamps.hour.to_numpy()
    first = window - 1
    while first < n and hours[first] != end_hour:
        first += 1
    return np.arange(first, n - H, step)


@dataclass
class EvalReport:
    models: tuple
    window: int
    H: int
    step: int
    origins: pd.DatetimeIndex
    errors: dict
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.origins)

    def mae(self, model):
        return self.errors[model].mean(axis=0)

    def mmae(self, model):
        return mmae(self.mae(model))

    def to_frame(self):
        rows = []
        for m in self.models:
            a, b = self.mae(m), self.mmae(m)
            for h in range(self.H):
                rows.append({"model": m, "h": h + 1, "mae": a[h], "mmae": b[h]})
        return pd.DataFrame(rows, columns=["model", "h", "mae", "mmae"])

    def summary(self, horizons=SUMMARY_HORIZONS):
        hs = [h for h in horizons if h <= self.H]
        rows = []
        for m in self.models:
            a, b = self.mae(m), self.mmae(m)
            rows.append({"model": m, "metric": "MAE", **{f"h{h}": a[h - 1] for h in hs}})
            rows.append({"model": m, "metric": "MMAE", **{f"h{h}": b[h - 1] for h in hs}})
        return pd.DataFrame(rows)


def _model_forecasts(models, history, H, holidays, config, p_max):
    """Price forecasts of every requested model from one estimation window."""
    out = {}
    price = np.asarray(history.price, dtype=float)
    if "pvartarch" in models or "pvar" in models:
        from .estimator import fit
        from .forecast import forecast_point

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            model = fit(history, holidays, config)
        if "pvartarch" in models:
            out["pvartarch"] = forecast_point(model, history, H, holidays)[0][0]
        if "pvar" in models:
            out["pvar"] = forecast_point(model.homoscedastic_variant(), history, H, holidays)[0][0]
    if "ar" in models:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            ar = fit_mean_adjusted_ar(price, history.timestamps, p_max[0])
        out["ar"] = ar.forecast(price, history.timestamps, H)[:, 0]
    if "var" in models:
        pl = np.column_stack([price, history.load])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            var = fit_mean_adjusted_ar(pl, history.timestamps, p_max[1])
        out["var"] = var.forecast(pl, history.timestamps, H)[:, 0]
    if "persistent" in models:
        out["persistent"] = persistent_forecast(price, H)
    return out


def rolling_study(panel, models=MODELS, window=18481, H=672, step=24, holidays=None, config=None, p_max=(1210, 555), threads=1):
    """Re-estimate on sliding windows and collect absolute price forecast errors.

    Each origin sees only the ``window`` hours ending at an hour-23
    observation; errors are measured against the following ``H`` hours.
    """
    models = tuple(models)
    unknown = set(models) - set(MODELS)
    if unknown:
        raise ValueError(f"unknown model(s) {sorted(unknown)}; valid: {', '.join(MODELS)}")
    if holidays is None:
        from .calendar import HolidayCalendar

        stamps = pd.DatetimeIndex(panel.timestamps)
        holidays = HolidayCalendar.german(range(stamps[0].year, stamps[-1].year + 1))
    if config is None:
        from .config import EstimatorConfig

        config = EstimatorConfig()
    ends = rolling_origins(panel.timestamps, window, H, step)
    if ends.size == 0:
        raise SampleTooShort("no admissible forecast origin")
    price = np.asarray(panel.price, dtype=float)

    def run(e):
        history = panel.slice(e - window + 1, e + 1)
        fc = _model_forecasts(models, history, H, holidays, config, p_max)
        actual = price[e + 1 : e + 1 + H]
        return {m: np.abs(actual - fc[m]) for m in models}

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, ends))
    else:
        results = [run(e) for e in ends]
    errors = {m: np.vstack([r[m] for r in results]) for m in models}
    origins = pd.DatetimeIndex(panel.timestamps)[ends]
    return EvalReport(models, window, H, step, origins, errors)
