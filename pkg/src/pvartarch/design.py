"""Regression systems of the mean and volatility equations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import COMPONENTS
from .errors import DroppedColumn, SampleTooShort

# reference parameter counts (mean, TARCH) under the default lag layout
REFERENCE_COUNTS = {"P": (1033, 402), "L": (664, 402), "R": (578, 397)}

ROLE_DETERMINISTIC = "deterministic"
ROLE_PERIODIC = "periodic"
SOURCE_ROLE = {"P": "price", "L": "load", "R": "wind+solar"}


@dataclass(frozen=True)
class DesignSystem:
    """One equation's regression system.

    ``X[:, 0]`` is the intercept; rows correspond to panel indices ``rows``.
    """

    component: str
    y: np.ndarray
    X: np.ndarray
    labels: tuple
    roles: tuple
    rows: np.ndarray
    trend: tuple = (0.0, 1.0)
    extra: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def block(self, role):
        return np.array([r == role for r in self.roles])


def trend_mapping(hours):
    """(origin, span) such that the trend regressor is (t - origin) / span on [0, 1]."""
    hours = np.asarray(hours, dtype=float)
    span = float(hours[-1] - hours[0]) if hours.size > 1 else 1.0
    return float(hours[0]), span or 1.0


def lag_labels(component, lags):
    labels, roles = [], []
    for j in COMPONENTS:
        for k in lags.mean[component][j]:
            labels.append(f"lag:{j}:{k}")
            roles.append(SOURCE_ROLE[j])
    return labels, roles


def column_labels(component, basis_labels, lags):
    labels = ["intercept", "trend"] + [f"basis:{b}" for b in basis_labels]
    roles = [ROLE_DETERMINISTIC] * len(labels)
    ll, lr = lag_labels(component, lags)
    labels += ll
    roles += lr
    for k in lags.periodic[component]:
        labels += [f"periodic:{k}:{b}" for b in basis_labels]
        roles += [ROLE_PERIODIC] * len(basis_labels)
    return labels, roles


def build_design(values, basis, lags, hours, start=None, trend=None):
    """Assemble the three mean-equation systems.

    Parameters
    ----------
    values : ndarray, shape (3, n)
        Standardized price, load and renewables.
    basis : dict
        Component -> :class:`BasisMatrix` aligned with ``values``.
    lags : LagSpec
    hours : ndarray
        Epoch hour index of every observation (drives the trend).
    start : int, optional
        First response row; defaults to the largest lag so all equations share rows.
    trend : tuple, optional
        (origin, span) of the trend regressor; defaults to the sample's own.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[1]
    start = lags.max_lag if start is None else start
    if n - start < 1:
        raise SampleTooShort(f"{n} observations leave no rows after lag {start}")
    rows = np.arange(start, n)
    trend = trend_mapping(hours) if trend is None else trend
    t = (np.asarray(hours, dtype=float)[rows] - trend[0]) / trend[1]
    out = {}
    for idx, i in enumerate(COMPONENTS):
        B = basis[i].values[rows]
        blocks = [np.ones((rows.size, 1)), t[:, None], B]
        for jdx, j in enumerate(COMPONENTS):
            ks = lags.mean[i][j]
            if ks:
                blocks.append(np.column_stack([values[jdx, rows - k] for k in ks]))
        for k in lags.periodic[i]:
            blocks.append(values[idx, rows - k][:, None] * B)
        labels, roles = column_labels(i, basis[i].labels, lags)
        X = np.hstack(blocks)
        out[i] = DesignSystem(i, values[idx, rows].copy(), X, tuple(labels), tuple(roles), rows, trend)
    return out


def parameter_counts(lags, basis_sizes):
    """Computed and reference-convention counts per equation.

    The reference convention adds one constant slot per periodic lag and
    counts one (not two) TARCH column per volatility lag.
    """
    report = {}
    for i in COMPONENTS:
        m = basis_sizes[i]
        n_lag = sum(len(lags.mean[i][j]) for j in COMPONENTS)
        n_per = len(lags.periodic[i])
        mean = 2 + m + n_lag + n_per * m
        tarch = 1 + m + 2 * len(lags.tarch[i])
        report[i] = {
            "deterministic": 2 + m,
            "lags": n_lag,
            "periodic": n_per * m,
            "mean": mean,
            "mean_reference": mean + n_per,
            "tarch": tarch,
            "tarch_reference": 1 + m + len(lags.tarch[i]),
        }
    return report


def standardize_columns(X, weights=None, exempt=None):
    """Z-score columns (ddof = 0), optionally under row weights.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    weights : ndarray, optional
        Positive row weights; normalized to mean one internally.
    exempt : array_like of bool, optional
        Columns left untouched (the intercept).

    Returns
    -------
    X_std : ndarray
        Standardized kept columns (exempt columns excluded).
    stats : dict
        ``mean``, ``scale`` and boolean ``kept`` over the original columns.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < 2:
        raise SampleTooShort("need at least two rows to standardize")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float) / np.mean(weights)
    exempt = np.zeros(p, bool) if exempt is None else np.asarray(exempt, bool)
    mean = w @ X / n
    scale = np.sqrt(w @ (X - mean) ** 2 / n)
    ref = np.maximum(np.abs(mean), 1.0)
    degenerate = (scale <= 1e-12 * ref) & ~exempt
    if degenerate.any():
        warnings.warn(f"dropping {int(degenerate.sum())} zero-variance column(s)", DroppedColumn, stacklevel=2)
    kept = ~exempt & ~degenerate
    X_std = (X[:, kept] - mean[kept]) / scale[kept]
    mean[~kept] = 0.0
    scale[~kept] = 1.0
    return X_std, {"mean": mean, "scale": scale, "kept": kept}


def rectify(eps):
    eps = np.asarray(eps, dtype=float)
    return np.maximum(eps, 0.0), np.maximum(-eps, 0.0)


def tarch_regressors(residuals, basis_values, J, pad=None):
    """Volatility regressors [1, splines, eps+ lags, eps- lags] for every row.

    Rows whose lags reach before the sample are filled with ``pad``
    ((mean eps+, mean eps-)); with ``pad=None`` they are NaN.
    """
    eps = np.asarray(residuals, dtype=float)
    n = eps.size
    pos, neg = rectify(eps)
    fill = (np.nan, np.nan) if pad is None else pad
    lagged = []
    for series, value in ((pos, fill[0]), (neg, fill[1])):
        for k in J:
            col = np.full(n, value, dtype=float)
            col[k:] = series[: n - k]
            lagged.append(col)
    blocks = [np.ones((n, 1)), np.asarray(basis_values, dtype=float)]
    if lagged:
        blocks.append(np.column_stack(lagged))
    return np.hstack(blocks)


def tarch_labels(basis_labels, J):
    return ["intercept"] + [f"basis:{b}" for b in basis_labels] + [f"pos:{k}" for k in J] + [f"neg:{k}" for k in J]


@dataclass(frozen=True)
class TarchDesign:
    y: np.ndarray
    X: np.ndarray
    labels: tuple
    rows: np.ndarray
    kept: np.ndarray


def build_tarch_design(residuals, basis_values, J, basis_labels=None):
    """Absolute-residual regression on complete rows.

    All-zero regressors (for example negative parts of all-positive residuals)
    are dropped with a warning; ``kept`` marks the surviving columns.
    """
    eps = np.asarray(residuals, dtype=float)
    J = tuple(J)
    start = max(J, default=0)
    if eps.size - start < 2:
        raise SampleTooShort("too few residuals for the volatility regression")
    basis_values = np.asarray(basis_values, dtype=float)
    if basis_labels is None:
        basis_labels = [str(k + 1) for k in range(basis_values.shape[1])]
    X = tarch_regressors(eps, basis_values, J)[start:]
    labels = np.array(tarch_labels(basis_labels, J), dtype=object)
    kept = np.any(X != 0, axis=0)
    if not kept.all():
        warnings.warn(f"dropping {int((~kept).sum())} all-zero volatility column(s)", DroppedColumn, stacklevel=2)
    return TarchDesign(np.abs(eps[start:]), X[:, kept], tuple(labels[kept]), np.arange(start, eps.size), kept)

