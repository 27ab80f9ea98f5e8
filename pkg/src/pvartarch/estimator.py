"""Iteratively reweighted lasso with a threshold-ARCH volatility layer."""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .basis import BasisMatrix, equation_basis
from .calendar import hours_since_epoch
from .config import COMPONENTS, EstimatorConfig
from .design import (
    build_design,
    build_tarch_design,
    rectify,
    standardize_columns,
    tarch_labels,
    tarch_regressors,
)
from .errors import DegenerateSeries, DroppedColumn, NonConvergence, SampleTooShort
from .ingest import SERIES, normalize_dst, standardize
from .solvers import lars_lasso, nnls, select_aic

MODEL_FORMAT = "pvartarch-model"
MODEL_VERSION = 1
HOURS_PER_YEAR = 8765.76
SOURCE_SERIES = dict(zip(COMPONENTS, SERIES))


# ---------------------------------------------------------------- mean step


@dataclass(frozen=True)
class MeanFit:
    theta: np.ndarray
    lam: float
    index: int
    path_length: int
    residuals: np.ndarray
    dropped: tuple = ()


def fit_mean(X, y, weights=None):
    """Weighted lasso of ``y`` on ``X`` (column 0 is the intercept) with AIC selection.

    Columns are centred and scaled under the normalized weights; the
    intercept is recovered from the weighted means.
    """
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float) / np.mean(weights)
    exempt = np.zeros(X.shape[1], bool)
    exempt[0] = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        Xs, st = standardize_columns(X, weights=w, exempt=exempt)
    ym = float(w @ y / n)
    r = np.sqrt(w)
    Xw = Xs * r[:, None]
    yw = (y - ym) * r
    path = lars_lasso(None, None, gram=Xw.T @ Xw, xty=Xw.T @ yw, yty=float(yw @ yw), n=n)
    k, ts = select_aic(path)
    kept = np.flatnonzero(st["kept"])
    theta = np.zeros(X.shape[1])
    theta[kept] = ts / st["scale"][kept]
    theta[0] = ym - st["mean"][kept] @ theta[kept]
    resid = y - X @ theta
    dropped = tuple(int(kept[j]) for j in path.dropped)
    return MeanFit(theta, float(path.lambdas[k]), k, len(path), resid, dropped)


# ---------------------------------------------------------- volatility step


@dataclass(frozen=True)
class TarchFit:
    alpha_tilde: np.ndarray
    labels: tuple
    sigma_tilde: np.ndarray
    pad: tuple
    converged: bool
    cov_index: np.ndarray
    cov: np.ndarray


def fit_tarch(residuals, basis_values, J, basis_labels=None):
    """Non-negative regression of |residual| on splines and rectified lags.

    The fit uses rows whose lags are all observed; fitted values for the
    first rows replace unobserved lags by the sample means of the
    rectified residuals.
    """
    eps = np.asarray(residuals, dtype=float)
    basis_values = np.asarray(basis_values, dtype=float).reshape(eps.size, -1)
    J = tuple(J)
    if basis_labels is None:
        basis_labels = [str(k + 1) for k in range(basis_values.shape[1])]
    labels = tarch_labels(basis_labels, J)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        td = build_tarch_design(eps, basis_values, J, basis_labels)
    sol = nnls(td.X, td.y)
    alpha = np.zeros(len(labels))
    alpha[td.kept] = sol.coef
    pos, neg = rectify(eps)
    pad = (float(pos.mean()), float(neg.mean()))
    full = tarch_regressors(eps, basis_values, J, pad=pad)
    sigma_tilde = full @ alpha

    # active-set sandwich covariance of alpha-tilde
    act = np.flatnonzero(sol.active)
    cov_index = np.flatnonzero(td.kept)[act]
    cov = np.zeros((0, 0))
    if act.size:
        Xa = td.X[:, act]
        v = td.y - td.X @ sol.coef
        cov = _sandwich(Xa, v)
    return TarchFit(alpha, tuple(labels), sigma_tilde, pad, sol.converged, cov_index, cov)


def estimate_gamma(residuals, sigma_tilde):
    """Plug-in first absolute moment: 1 / sd(residual / sigma_tilde)."""
    eps = np.asarray(residuals, dtype=float)
    st = np.asarray(sigma_tilde, dtype=float)
    ok = st > 0
    if ok.sum() < 2:
        raise DegenerateSeries("volatility fit is zero almost everywhere")
    sd = float(np.std(eps[ok] / st[ok], ddof=1))
    if not sd > 0:
        raise DegenerateSeries("scaled residuals have zero variance")
    return 1.0 / sd


def _sandwich(Xa, e):
    """HC0 covariance (X'X)^-1 X' diag(e^2) X (X'X)^-1."""
    bread = Xa.T @ Xa
    try:
        inv = np.linalg.inv(bread)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(bread)
    Xe = Xa * e[:, None]
    cov = inv @ (Xe.T @ Xe) @ inv
    return 0.5 * (cov + cov.T)


# ------------------------------------------------------------- containers


@dataclass
class EquationParams:
    """Everything the forecaster needs about one equation."""

    component: str
    labels: tuple
    theta: np.ndarray
    tarch_labels: tuple
    alpha_tilde: np.ndarray
    gamma: float
    resid_sd: float
    sigma_floor: float
    lam: float = float("nan")

    @property
    def alpha(self):
        return self.alpha_tilde / self.gamma

    def coef(self, label):
        return float(self.theta[self.labels.index(label)])


@dataclass
class EquationFit:
    """In-sample results of one equation (diagnostics, inference)."""

    params: EquationParams
    roles: tuple
    rows: np.ndarray
    y: np.ndarray
    residuals: np.ndarray
    sigma_tilde: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    weights: np.ndarray
    cov_index: np.ndarray
    cov: np.ndarray
    tarch_cov_index: np.ndarray
    tarch_cov: np.ndarray
    tarch_basis: np.ndarray
    tarch_lags: tuple
    tarch_pad: tuple
    path_length: int = 0

    @property
    def component(self):
        return self.params.component

    @property
    def active(self):
        return self.params.theta != 0

    def active_fraction(self, role=None):
        """Share of selected coefficients (excluding the intercept), optionally per block."""
        mask = np.ones(len(self.roles), bool)
        mask[0] = False
        if role is not None:
            mask &= np.array([r == role for r in self.roles])
        return float(self.active[mask].mean()) if mask.any() else float("nan")


@dataclass
class IterationRecord:
    iteration: int
    delta: dict
    lam: dict
    active: dict


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    def deltas(self, component):
        return np.array([r.delta[component] for r in self.records])

    def to_rows(self):
        rows = []
        for r in self.records:
            for i in COMPONENTS:
                rows.append({"iteration": r.iteration, "equation": i, "delta": r.delta[i], "lambda": r.lam[i], "active": r.active[i]})
        return rows


@dataclass
class FittedModel:
    config: EstimatorConfig
    standardization: dict | None
    trend: tuple
    basis_labels: dict
    equations: dict
    z: np.ndarray
    homoscedastic: bool
    trace: IterationTrace | None = None
    fits: dict | None = None
    pvar: dict | None = None
    sample: tuple = ()
    pvar_z: np.ndarray | None = None

    @property
    def lags(self):
        return self.config.lags

    def history_needed(self):
        return self.lags.max_lag + self.lags.max_tarch_lag

    # ---- serialization

    def to_dict(self):
        def eq(p):
            nz = np.flatnonzero(p.theta)
            anz = np.flatnonzero(p.alpha_tilde)
            return {
                "labels": list(p.labels),
                "theta": {p.labels[j]: float(p.theta[j]) for j in nz},
                "tarch_labels": list(p.tarch_labels),
                "alpha_tilde": {p.tarch_labels[j]: float(p.alpha_tilde[j]) for j in anz},
                "gamma": p.gamma,
                "resid_sd": p.resid_sd,
                "sigma_floor": p.sigma_floor,
                "lambda": p.lam,
            }

        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": self.config.to_dict(),
            "standardization": None if self.standardization is None else {k: list(v) for k, v in self.standardization.items()},
            "trend": list(self.trend),
            "basis_labels": {k: list(v) for k, v in self.basis_labels.items()},
            "homoscedastic": self.homoscedastic,
            "sample": list(self.sample),
            "equations": {i: eq(self.equations[i]) for i in COMPONENTS},
            "pvar": None if self.pvar is None else {i: eq(self.pvar[i]) for i in COMPONENTS},
            "standardized_residuals": [[float(v) for v in row] for row in self.z],
            "pvar_standardized_residuals": None if self.pvar_z is None else [[float(v) for v in row] for row in self.pvar_z],
            "trace": None
            if self.trace is None
            else {"stop_reason": self.trace.stop_reason, "records": self.trace.to_rows()},
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != MODEL_FORMAT:
            raise ValueError("not a model file")
        if data.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {data.get('version')}")
        config = EstimatorConfig.from_dict(data["config"])

        def eq(i, d):
            labels = tuple(d["labels"])
            theta = np.zeros(len(labels))
            for k, v in d["theta"].items():
                theta[labels.index(k)] = v
            tl = tuple(d["tarch_labels"])
            alpha = np.zeros(len(tl))
            for k, v in d["alpha_tilde"].items():
                alpha[tl.index(k)] = v
            return EquationParams(i, labels, theta, tl, alpha, d["gamma"], d["resid_sd"], d["sigma_floor"], d["lambda"])

        stdz = data["standardization"]
        trace = None
        if data.get("trace"):
            trace = IterationTrace(stop_reason=data["trace"]["stop_reason"])
            by_iter = {}
            for row in data["trace"]["records"]:
                rec = by_iter.setdefault(row["iteration"], IterationRecord(row["iteration"], {}, {}, {}))
                rec.delta[row["equation"]] = row["delta"]
                rec.lam[row["equation"]] = row["lambda"]
                rec.active[row["equation"]] = row["active"]
            trace.records = [by_iter[k] for k in sorted(by_iter)]
        return cls(
            config=config,
            standardization=None if stdz is None else {k: tuple(v) for k, v in stdz.items()},
            trend=tuple(data["trend"]),
            basis_labels={k: tuple(v) for k, v in data["basis_labels"].items()},
            equations={i: eq(i, data["equations"][i]) for i in COMPONENTS},
            z=np.asarray(data["standardized_residuals"], dtype=float).reshape(-1, 3),
            homoscedastic=bool(data["homoscedastic"]),
            trace=trace,
            pvar=None if data.get("pvar") is None else {i: eq(i, data["pvar"][i]) for i in COMPONENTS},
            sample=tuple(data.get("sample", ())),
            pvar_z=None
            if data.get("pvar_standardized_residuals") is None
            else np.asarray(data["pvar_standardized_residuals"], dtype=float).reshape(-1, 3),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def homoscedastic_variant(self):
        """The first-iteration (constant-variance) model as a standalone model."""
        if self.pvar is None or self.pvar_z is None:
            raise ValueError("model carries no first-iteration fit")
        return FittedModel(
            self.config, self.standardization, self.trend, self.basis_labels, self.pvar, self.pvar_z, True, sample=self.sample
        )


# ----------------------------------------------------------- orchestration


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def prepare_inputs(panel, holidays, config):
    """Standardize the panel and evaluate the per-equation bases."""
    panel = normalize_dst(panel)
    if config.standardize:
        panel = standardize(panel)
    holidays.require(panel.timestamps)
    bases = {
        i: equation_basis(
            i, panel.timestamps, holidays, dst=panel.dst, config=config.basis, precedence=config.phase_precedence, timezone=config.timezone
        )
        for i in COMPONENTS
    }
    return panel, bases


def fit(panel, holidays, config=None):
    """Estimate the periodic VAR-TARCH model by the reweighting scheme.

    Parameters
    ----------
    panel : HourlyPanel
        Natural-unit (or already standardized) hourly data.
    holidays : HolidayCalendar
    config : EstimatorConfig, optional

    Returns
    -------
    FittedModel
    """
    config = config or EstimatorConfig()
    panel, bases = prepare_inputs(panel, holidays, config)
    lags = config.lags
    hours = hours_since_epoch(panel.timestamps)
    if panel.n - lags.max_lag < 10 * (lags.max_tarch_lag + 2):
        raise SampleTooShort(f"{panel.n} observations are too few for lags up to {lags.max_lag}")
    bases = {i: drop_unsupported(bases[i], config.min_support) for i in COMPONENTS}
    systems = build_design(panel.values(), bases, lags, hours)
    return fit_systems(systems, bases, config, panel)


def drop_unsupported(basis, threshold):
    """Zero basis columns whose in-sample peak is below ``threshold``.

    A spline seen only through the far tail of its support would get an
    arbitrarily large coefficient that blows up outside the sample.
    """
    peak = np.abs(basis.values).max(axis=0, initial=0.0)
    weak = peak < threshold
    if not weak.any():
        return basis
    names = [basis.labels[k] for k in np.flatnonzero(weak)]
    warnings.warn(f"{basis.component}: basis columns {names} barely covered by the sample; left out", DroppedColumn, stacklevel=3)
    values = basis.values.copy()
    values[:, weak] = 0.0
    return BasisMatrix(values, basis.labels, basis.component)


def fit_systems(systems, bases, config, panel=None):
    lags = config.lags
    rows = systems["P"].rows
    tb = {i: bases[i].values[rows] for i in COMPONENTS}
    weights = {i: np.ones(rows.size) for i in COMPONENTS}
    previous = {}
    trace = IterationTrace()
    pvar = pvar_z = None
    state = {}

    def step(i):
        ds = systems[i]
        mf = fit_mean(ds.X, ds.y, weights[i])
        tf = fit_tarch(mf.residuals, tb[i], lags.tarch[i], bases[i].labels)
        gamma = estimate_gamma(mf.residuals, tf.sigma_tilde)
        return i, mf, tf, gamma

    for K in range(1, config.max_iterations + 1):
        results = _map(step, list(COMPONENTS), config.threads)
        delta, lam, active = {}, {}, {}
        for i, mf, tf, gamma in results:
            sd = float(np.std(mf.residuals, ddof=1))
            sigma = tf.sigma_tilde / gamma
            if K == 1:
                previous[i] = np.full(rows.size, sd)
            delta[i] = float(np.mean(np.abs(previous[i] - sigma)))
            lam[i] = mf.lam
            active[i] = int(np.count_nonzero(mf.theta[1:]))
            floor = config.sigma_floor * sd
            state[i] = (mf, tf, gamma, sigma, sd, floor, weights[i])
            previous[i] = sigma
        if K == 1:
            pvar = {
                i: _params(systems[i], state[i], lags) for i in COMPONENTS
            }
            for i in COMPONENTS:
                mf = state[i][0]
                sd = state[i][4]
                # first-iteration variant keeps a constant variance
                pvar[i].alpha_tilde = np.zeros(len(pvar[i].tarch_labels))
                pvar[i].alpha_tilde[0] = sd
                pvar[i].gamma = 1.0
            pvar_z = np.column_stack([state[i][0].residuals / state[i][4] for i in COMPONENTS])
        trace.records.append(IterationRecord(K, delta, lam, active))
        for i in COMPONENTS:
            weights[i] = np.maximum(state[i][3], state[i][5]) ** -2.0
        if K > 1 and all(delta[i] < config.tolerance for i in COMPONENTS):
            trace.stop_reason = "tolerance"
            break
    else:
        trace.stop_reason = "max_iterations"
        if config.max_iterations > 1:
            warnings.warn("reweighting stopped at the iteration cap", NonConvergence, stacklevel=2)

    homoscedastic = config.max_iterations == 1
    fits = {i: _equation_fit(systems[i], state[i], tb[i], lags, homoscedastic) for i in COMPONENTS}
    params = {i: fits[i].params for i in COMPONENTS}
    if homoscedastic:
        params = pvar
        for i in COMPONENTS:
            fits[i].params = pvar[i]
    z = np.column_stack([fits[i].z for i in COMPONENTS])
    stdz = None if panel is None else panel.standardization
    sample = () if panel is None else (str(panel.timestamps[0]), str(panel.timestamps[-1]))
    return FittedModel(
        config=config,
        standardization=stdz,
        trend=systems["P"].trend,
        basis_labels={i: tuple(bases[i].labels) for i in COMPONENTS},
        equations=params,
        z=z,
        homoscedastic=homoscedastic,
        trace=trace,
        fits=fits,
        pvar=pvar,
        sample=sample,
        pvar_z=pvar_z,
    )


def _params(ds, st, lags):
    mf, tf, gamma, sigma, sd, floor, _ = st
    return EquationParams(ds.component, ds.labels, mf.theta.copy(), tf.labels, tf.alpha_tilde.copy(), float(gamma), sd, floor, mf.lam)


def _equation_fit(ds, st, tb, lags, homoscedastic):
    mf, tf, gamma, sigma, sd, floor, w = st
    params = _params(ds, st, lags)
    if homoscedastic:
        sigma_used = np.full(sigma.size, sd)
    else:
        sigma_used = np.maximum(sigma, floor)
    z = mf.residuals / sigma_used
    # HC0 sandwich on the active set in weighted coordinates
    act = np.flatnonzero(mf.theta)
    r = np.sqrt(w / w.mean())
    cov = _sandwich(ds.X[:, act] * r[:, None], mf.residuals * r) if act.size else np.zeros((0, 0))
    return EquationFit(
        params=params,
        roles=ds.roles,
        rows=ds.rows,
        y=ds.y,
        residuals=mf.residuals,
        sigma_tilde=tf.sigma_tilde,
        sigma=sigma,
        z=z,
        weights=w,
        cov_index=act,
        cov=cov,
        tarch_cov_index=tf.cov_index,
        tarch_cov=tf.cov,
        tarch_basis=tb,
        tarch_lags=tuple(lags.tarch[ds.component]),
        tarch_pad=tf.pad,
        path_length=mf.path_length,
    )


# ---------------------------------------------------------------- inference


@dataclass(frozen=True)
class TestRecord:
    name: str
    estimate: float
    se: float
    t: float
    p: float

    def as_dict(self):
        return {"name": self.name, "estimate": self.estimate, "se": self.se, "t": self.t, "p": self.p}


def _record(name, est, var):
    se = float(np.sqrt(max(var, 0.0)))
    if se > 0:
        t = est / se
    else:
        t = 0.0 if est == 0 else float("inf") * np.sign(est)
    p = float(2 * stats.norm.sf(abs(t)))
    return TestRecord(name, float(est), se, float(t), p)


def _linear_test(name, theta, cov_index, cov, a):
    """Test of a'theta using the covariance of the active coefficients."""
    est = float(a @ theta)
    sub = a[cov_index]
    return _record(name, est, float(sub @ cov @ sub))


def coefficient_table(fit):
    """Estimate, standard error, t and p for every selected coefficient."""
    p = fit.params
    se = np.sqrt(np.clip(np.diag(fit.cov), 0, None))
    rows = []
    for pos, j in enumerate(fit.cov_index):
        est = p.theta[j]
        t = est / se[pos] if se[pos] > 0 else float("nan")
        rows.append(
            {
                "label": p.labels[j],
                "role": fit.roles[j],
                "estimate": float(est),
                "se": float(se[pos]),
                "t": float(t),
                "p": float(2 * stats.norm.sf(abs(t))) if np.isfinite(t) else float("nan"),
            }
        )
    return rows


def test_leverage(fit, k):
    """Cumulated asymmetry of the volatility response up to lag ``k``."""
    p = fit.params
    a = np.zeros(len(p.tarch_labels))
    for lag in fit.tarch_lags:
        if lag <= k:
            a[p.tarch_labels.index(f"pos:{lag}")] = 1.0
            a[p.tarch_labels.index(f"neg:{lag}")] = -1.0
    a /= p.gamma
    return _linear_test(f"A[{p.component},{k}]", p.alpha_tilde, fit.tarch_cov_index, fit.tarch_cov, a)


def leverage_curve(fit):
    return [test_leverage(fit, k) for k in fit.tarch_lags]


def test_longrun(fits, equation="P"):
    """Summed lag coefficients of load and renewables in the price equation."""
    out = {}
    fit_ = fits[equation]
    p = fit_.params
    for src in ("L", "R"):
        a = np.array([1.0 if lab.startswith(f"lag:{src}:") else 0.0 for lab in p.labels])
        out[src] = _linear_test(f"Phi[{equation},{src}]", p.theta, fit_.cov_index, fit_.cov, a)
    return out


def effect_in_units(model, longrun=None, z90=1.6448536269514722):
    """Long-run effects in EUR/MWh per GWh and the linear trend in EUR/MWh per year."""
    stdz = model.standardization or {name: (0.0, 1.0) for name in SERIES}
    s_p = stdz["price"][1]
    longrun = longrun or test_longrun(model.fits)
    report = {}
    for src, name in (("L", "load"), ("R", "renewables")):
        rec = longrun[src]
        factor = s_p / stdz[name][1] * 1000.0
        report[name] = {
            "phi": rec.estimate,
            "t": rec.t,
            "p": rec.p,
            "eur_per_mwh_per_gwh": rec.estimate * factor,
            "halfwidth90": z90 * rec.se * factor,
        }
    fit_ = model.fits["P"]
    j = fit_.params.labels.index("trend")
    a = np.zeros(len(fit_.params.labels))
    a[j] = 1.0
    rec = _linear_test("trend", fit_.params.theta, fit_.cov_index, fit_.cov, a)
    factor = HOURS_PER_YEAR / model.trend[1] * s_p
    report["trend"] = {
        "beta": rec.estimate,
        "t": rec.t,
        "p": rec.p,
        "eur_per_mwh_per_year": rec.estimate * factor,
        "halfwidth90": z90 * rec.se * factor,
    }
    return report


def decompose_sigma(fit):
    """Split sigma into deterministic, positive-shock and negative-shock parts."""
    p = fit.params
    X = tarch_regressors(fit.residuals, fit.tarch_basis, fit.tarch_lags, pad=fit.tarch_pad)
    alpha = p.alpha_tilde / p.gamma
    kind = np.array([lab.split(":")[0] for lab in p.tarch_labels])
    det = X[:, (kind == "intercept") | (kind == "basis")] @ alpha[(kind == "intercept") | (kind == "basis")]
    pos = X[:, kind == "pos"] @ alpha[kind == "pos"]
    neg = X[:, kind == "neg"] @ alpha[kind == "neg"]
    return det, pos, neg


def cross_acf(series, max_lag=200):
    """Biased cross-autocorrelations ``r[i, j, k] = corr(x_i(t), x_j(t - k))``."""
    x = np.asarray(series, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    x = x - x.mean(axis=0)
    sd = np.sqrt((x * x).sum(axis=0) / n)
    sd[sd == 0] = 1.0
    max_lag = min(max_lag, n - 1)
    out = np.empty((m, m, max_lag + 1))
    for k in range(max_lag + 1):
        out[:, :, k] = x[k:].T @ x[: n - k] / n
    return out / np.outer(sd, sd)[:, :, None]


def residual_diagnostics(model, max_lag=200):
    """Cross-ACF grids of standardized residuals and their absolute values."""
    z = model.z
    return {"z": cross_acf(z, max_lag), "abs_z": cross_acf(np.abs(z), max_lag)}


# keep pytest from collecting the test_* helpers when imported into test modules
test_leverage.__test__ = False
test_longrun.__test__ = False
TestRecord.__test__ = False
