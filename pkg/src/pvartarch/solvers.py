"""LARS-lasso path with AIC selection and Lawson-Hanson non-negative least squares.

Both solvers work on the Gram matrix ``X'X`` so that their cost after the
initial product depends on the column count only.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import IterationLimit, NonFiniteInput, RankCollapse


@dataclass(frozen=True)
class LassoPath:
    """Breakpoints of the lasso path for ``||y - X theta||^2 + lam * ||theta||_1``.

    ``lambdas`` is strictly decreasing; ``coefs[k]`` is the solution at
    ``lambdas[k]`` and the path is linear in between.
    """

    lambdas: np.ndarray
    coefs: np.ndarray
    active: tuple
    rss: np.ndarray
    df: np.ndarray
    n: int
    p: int
    dropped: tuple = ()

    def __len__(self):
        return len(self.lambdas)

    def coef_at(self, lam):
        """Coefficients at an arbitrary penalty by linear interpolation."""
        lams = self.lambdas
        if lam >= lams[0]:
            return self.coefs[0].copy()
        if lam <= lams[-1]:
            return self.coefs[-1].copy()
        k = int(np.searchsorted(-lams, -lam, side="right"))
        lo, hi = lams[k - 1], lams[k]
        frac = (lo - lam) / (lo - hi)
        return (1 - frac) * self.coefs[k - 1] + frac * self.coefs[k]

    def aic(self):
        floor = 1e-12 * max(self.rss[0], 1e-300)
        return self.n * np.log(np.maximum(self.rss, floor) / self.n) + 2.0 * self.df


def _chol_add(L, G_A_j, g_jj, tol):
    """Extend the Cholesky factor by one column; ``None`` on numerical rank loss."""
    k = L.shape[0]
    if k == 0:
        if g_jj <= tol:
            return None
        return np.array([[np.sqrt(g_jj)]])
    l = solve_triangular(L, G_A_j, lower=True, check_finite=False)
    d2 = g_jj - l @ l
    if d2 <= tol * max(g_jj, 1.0):
        return None
    out = np.zeros((k + 1, k + 1))
    out[:k, :k] = L
    out[k, :k] = l
    out[k, k] = np.sqrt(d2)
    return out


def _chol_delete(L, idx):
    """Remove row/column ``idx`` from the factored matrix using Givens rotations."""
    L = np.delete(L, idx, axis=0)
    # L is now (k-1) x k lower-Hessenberg in its trailing part; rotate columns back
    for i in range(idx, L.shape[0]):
        a, b = L[i, i], L[i, i + 1]
        r = np.hypot(a, b)
        if r == 0:
            continue
        c, s = a / r, b / r
        col_i = L[i:, i].copy()
        col_n = L[i:, i + 1].copy()
        L[i:, i] = c * col_i + s * col_n
        L[i:, i + 1] = -s * col_i + c * col_n
    L = L[:, :-1]
    # keep a positive diagonal
    sign = np.sign(np.diag(L))
    sign[sign == 0] = 1
    return L * sign


def lars_lasso(X, y, weights=None, max_steps=None, gram=None, xty=None, yty=None, n=None):
    """Full LARS-lasso path.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Design, ideally with standardized columns. Ignored when ``gram`` is given.
    y : ndarray, shape (n,)
    weights : ndarray, optional
        Positive row weights; rows are scaled by their square roots.
    max_steps : int, optional
        Cap on the number of path segments.
    gram, xty, yty, n : optional
        Precomputed ``X'X``, ``X'y``, ``y'y`` and row count.

    Returns
    -------
    LassoPath
    """
    if gram is None:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise NonFiniteInput("design or response contains non-finite values")
        if weights is not None:
            w = np.asarray(weights, dtype=float)
            if (w <= 0).any() or not np.isfinite(w).all():
                raise NonFiniteInput("weights must be finite and positive")
            r = np.sqrt(w)
            X = X * r[:, None]
            y = y * r
        gram = X.T @ X
        xty = X.T @ y
        yty = float(y @ y)
        n = X.shape[0]
    G = np.asarray(gram, dtype=float)
    c0 = np.asarray(xty, dtype=float)
    p = G.shape[0]
    if not (np.isfinite(G).all() and np.isfinite(c0).all()):
        raise NonFiniteInput("Gram matrix contains non-finite values")
    max_steps = 8 * max(p, 1) + 10 if max_steps is None else max_steps
    chol_tol = 1e-10

    theta = np.zeros(p)
    active, signs = [], []
    in_active = np.zeros(p, bool)
    excluded = np.zeros(p, bool)
    dropped_rank = []
    L = np.zeros((0, 0))
    corr = c0.copy()
    C = float(np.abs(corr).max(initial=0.0))
    lambdas, coefs = [2 * C], [theta.copy()]
    eps = 1e-12 * max(C, 1e-300)

    pending = int(np.argmax(np.abs(corr))) if C > eps else -1
    just_dropped = -1
    steps = 0
    while C > eps and steps < max_steps:
        if pending >= 0:
            j = pending
            pending = -1
            Lnew = _chol_add(L, G[active, j], G[j, j], chol_tol)
            if Lnew is None:
                excluded[j] = True
                dropped_rank.append(j)
                warnings.warn(f"column {j} is numerically dependent on the active set; ignored", RankCollapse, stacklevel=2)
            else:
                L = Lnew
                active.append(j)
                signs.append(1.0 if corr[j] > 0 else -1.0)
                in_active[j] = True
        if not active:
            free = np.flatnonzero(~excluded)
            if free.size == 0 or np.abs(corr[free]).max() <= eps:
                break
            pending = int(free[np.argmax(np.abs(corr[free]))])
            continue
        steps += 1
        A = np.array(active)
        d = solve_triangular(L.T, solve_triangular(L, np.array(signs), lower=True, check_finite=False), lower=False, check_finite=False)
        a = G[:, A] @ d

        gamma, event, who = C, "end", -1
        free = np.flatnonzero(~in_active & ~excluded)
        if free.size:
            cj, aj = corr[free], a[free]
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.concatenate([(C - cj) / (1 - aj), (C + cj) / (1 + aj)])
            g[~np.isfinite(g) | (g < -1e-10 * C)] = np.inf
            g = np.maximum(g, 0.0)
            # a column just dropped may not re-enter at the same breakpoint
            if just_dropped >= 0:
                back = np.concatenate([free, free]) == just_dropped
                g[back & (g <= 1e-10 * C)] = np.inf
            k = int(np.argmin(g))
            if g[k] < gamma:
                gamma, event, who = float(g[k]), "add", int(free[k % free.size])
        with np.errstate(divide="ignore", invalid="ignore"):
            gd = -theta[A] / d
        gd[~np.isfinite(gd) | (gd <= 0)] = np.inf
        k = int(np.argmin(gd))
        if gd[k] < gamma:
            gamma, event, who = float(gd[k]), "drop", k

        theta[A] += gamma * d
        C = 0.0 if event == "end" else C - gamma
        just_dropped = -1
        if event == "drop":
            j = active[who]
            theta[j] = 0.0
            L = _chol_delete(L, who)
            del active[who]
            del signs[who]
            in_active[j] = False
            just_dropped = j
        elif event == "add":
            pending = who
        corr = c0 - G[:, active] @ theta[active] if active else c0.copy()
        if gamma > eps:
            lambdas.append(2 * C)
            coefs.append(theta.copy())
        else:
            coefs[-1] = theta.copy()

    lambdas = np.array(lambdas)
    coefs = np.array(coefs)
    actives = tuple(tuple(int(j) for j in np.flatnonzero(c)) for c in coefs)
    df = np.array([len(a) for a in actives], dtype=float)
    rss = yty - 2 * coefs @ c0 + np.einsum("ij,jk,ik->i", coefs, G, coefs)
    rss = np.maximum(rss, 0.0)
    return LassoPath(lambdas, coefs, actives, rss, df, int(n), p, tuple(dropped_rank))


def select_aic(path):
    """Breakpoint minimizing ``n log(RSS/n) + 2 df``; ties go to the smaller df.

    Returns
    -------
    index : int
    theta : ndarray
    """
    aic = path.aic()
    best = aic.min()
    tie = aic <= best + 1e-9 * max(1.0, abs(best))
    candidates = np.flatnonzero(tie)
    k = int(candidates[np.argmin(path.df[candidates])])
    return k, path.coefs[k].copy()


@dataclass(frozen=True)
class NnlsSolution:
    coef: np.ndarray
    active: np.ndarray
    residual: np.ndarray | None
    dual: np.ndarray
    converged: bool
    iterations: int

    def objective(self):
        if self.residual is None:
            return None
        return float(self.residual @ self.residual)


def _solve_sym(G, b):
    try:
        return np.linalg.solve(G, b)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, b, rcond=None)[0]


def nnls(X, y, max_iter=None, tol=None, gram=None, xty=None):
    """Lawson-Hanson active-set solution of ``min ||y - X b||^2`` subject to ``b >= 0``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    max_iter : int, optional
        Outer-iteration cap, default ``10 p``. Hitting it raises an
        :class:`IterationLimit` warning and flags ``converged=False``.
    tol : float, optional
        KKT tolerance, default ``1e-8 * ||X'y||_inf``.
    """
    if gram is None:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise NonFiniteInput("NNLS input contains non-finite values")
        gram = X.T @ X
        xty = X.T @ y
    G = np.asarray(gram, dtype=float)
    b = np.asarray(xty, dtype=float)
    p = b.size
    max_iter = 10 * max(p, 1) if max_iter is None else max_iter
    tol = 1e-8 * float(np.abs(b).max(initial=0.0)) if tol is None else tol

    beta = np.zeros(p)
    passive = np.zeros(p, bool)
    w = b.copy()
    it = 0
    converged = True
    while (~passive).any() and (w[~passive] > tol).any():
        if it >= max_iter:
            converged = False
            warnings.warn(f"NNLS stopped after {it} iterations", IterationLimit, stacklevel=2)
            break
        it += 1
        cand = np.where(passive, -np.inf, w)
        passive[int(np.argmax(cand))] = True
        while True:
            P = np.flatnonzero(passive)
            s = np.zeros(p)
            s[P] = _solve_sym(G[np.ix_(P, P)], b[P])
            if (s[P] > 0).all():
                break
            neg = P[s[P] <= 0]
            alpha = np.min(beta[neg] / (beta[neg] - s[neg]))
            beta = beta + alpha * (s - beta)
            passive &= beta > 1e-14 * max(1.0, np.abs(beta).max())
            beta[~passive] = 0.0
            if not passive.any():
                s = np.zeros(p)
                break
        beta = s
        w = b - G @ beta
    return NnlsSolution(beta, beta > 0, None, w, converged, it)


def nnls_with_residual(X, y, **kwargs):
    """:func:`nnls` plus the residual vector."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    sol = nnls(X, y, **kwargs)
    r = y - X @ sol.coef
    return NnlsSolution(sol.coef, sol.active, r, sol.dual, sol.converged, sol.iterations)
