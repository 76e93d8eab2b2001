"""L1-penalised synthetic control with signed weights and an intercept.

Solves ``min_{b0, w} sum_{t<T0} (y_t - b0 - x_t'w)^2 + lam * |w|_1`` by
cyclic coordinate descent on the Gram matrix. Donor columns are
standardised over the pre-period by default; weights are reported on the
original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonConvergence
from .panel import Panel
from .scm import SeriesFit

TOL = 1e-9
MAX_SWEEPS = 100_000


@dataclass(frozen=True)
class SignedWeights:
    w: np.ndarray
    intercept: float
    lam: float

    @property
    def l1(self) -> float:
        return float(np.abs(self.w).sum())


@dataclass(frozen=True, eq=False)
class LassoFit(SeriesFit):
    donors: tuple[str, ...] = ()
    weights: SignedWeights | None = None
    cv_errors: dict[float, float] | None = None

    def summary(self) -> dict:
        out = super().summary()
        out.update(
            intercept=self.weights.intercept,
            lam=self.weights.lam,
            weights=dict(zip(self.donors, map(float, self.weights.w))),
        )
        return out


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def _kkt_solve(G, q, lam, w, tol):
    """Exact solution on the support and signs of ``w``, if it satisfies KKT."""
    S = np.flatnonzero(w)
    sgn = np.sign(w[S])
    out = np.zeros_like(w)
    if S.size:
        try:
            out[S] = np.linalg.solve(G[np.ix_(S, S)], q[S] - lam / 2 * sgn)
        except np.linalg.LinAlgError:
            return None
        if np.any(np.sign(out[S]) != sgn):
            return None
    grad = q - G @ out
    inactive = np.ones(len(w), bool)
    inactive[S] = False
    slack = lam / 2 * (1 + 1e-10) + tol * max(1.0, float(np.max(np.abs(np.diag(G)))))
    if np.any(np.abs(grad[inactive]) > slack):
        return None
    return out


def _cd(G, q, lam, w0=None, tol=TOL, max_sweeps=MAX_SWEEPS):
    """Coordinate descent for ``w'Gw - 2q'w + lam|w|_1`` (centred data).

    Ill-conditioned Gram matrices make plain coordinate descent crawl, so
    after each sweep the support and signs found so far are tried in an
    exact solve; it is accepted when it satisfies the optimality conditions.
    """
    J = len(q)
    w = np.zeros(J) if w0 is None else w0.copy()
    diag = np.diag(G).copy()
    Gw = G @ w
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for j in range(J):
            if diag[j] <= 0:
                continue
            old = w[j]
            z = q[j] - (Gw[j] - diag[j] * old)
            new = soft_threshold(z, lam / 2) / diag[j]
            if new != old:
                Gw += G[:, j] * (new - old)
                w[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return w, sweep
        exact = _kkt_solve(G, q, lam, w, tol)
        if exact is not None:
            if np.max(np.abs(exact - w)) < tol:
                return exact, sweep
            w = exact
            Gw = G @ w
    raise NonConvergence(max_sweeps, "lasso coordinate descent")


def _prepare(X, y, standardize):
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    if standardize:
        scale = Xc.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        scale = np.ones(X.shape[1])
    Xs = Xc / scale
    return Xs, y - y_mean, x_mean, y_mean, scale


def lasso_regression(X, y, lam: float, standardize: bool = True, w0=None) -> SignedWeights:
    """Intercept-unpenalised lasso on arrays (rows are periods)."""
    if not lam >= 0:
        raise ConfigError("lambda must be non-negative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xs, yc, x_mean, y_mean, scale = _prepare(X, y, standardize)
    if math.isinf(lam):
        ws = np.zeros(X.shape[1])
    else:
        ws, _ = _cd(Xs.T @ Xs, Xs.T @ yc, lam, None if w0 is None else w0 * scale)
    w = ws / scale
    return SignedWeights(w, y_mean - float(x_mean @ w), float(lam))


def lambda_max(X, y, standardize: bool = True) -> float:
    """Smallest penalty at which every coefficient is zero."""
    Xs, yc, *_ = _prepare(np.asarray(X, float), np.asarray(y, float), standardize)
    return float(2 * np.max(np.abs(Xs.T @ yc)))


def default_grid(X, y, n: int = 50, standardize: bool = True) -> np.ndarray:
    top = lambda_max(X, y, standardize)
    if top == 0:
        return np.zeros(1)
    return top * np.logspace(-4, 2, n)


def cv_errors(X, y, grid, standardize: bool = True) -> np.ndarray:
    """Leave-one-period-out squared prediction error for each penalty."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    grid = np.asarray(grid, dtype=float)
    order = np.argsort(grid)[::-1]  # large to small, for warm starts
    errs = np.zeros(len(grid))
    n = len(y)
    for t in range(n):
        keep = np.arange(n) != t
        w = None
        for i in order:
            sw = lasso_regression(X[keep], y[keep], grid[i], standardize, w0=w)
            w = sw.w
            errs[i] += (y[t] - sw.intercept - X[t] @ sw.w) ** 2
    return errs / n


def cv_lambda(panel: Panel, grid=None, standardize: bool = True):
    """Penalty minimising leave-one-pre-period-out error; ties go to the larger one.

    Returns ``(lam, {lam: error})``.
    """
    X, y = panel.y_donors[: panel.t0_index], panel.y_treated[: panel.t0_index]
    grid = default_grid(X, y, standardize=standardize) if grid is None else np.asarray(grid, float)
    if grid.size == 0 or np.any(grid < 0):
        raise ConfigError("lambda grid must be non-empty and non-negative")
    errs = cv_errors(X, y, grid, standardize)
    best = errs.min()
    tol = 1e-12 * max(best, 1e-300)
    lam = float(max(g for g, e in zip(grid, errs) if e <= best + tol))
    return lam, dict(zip(map(float, grid), map(float, errs)))


def fit_lasso_sc(panel: Panel, lam: float | None = None, standardize: bool = True):
    """Fit with a given penalty, or a cross-validated one when ``lam`` is None.

    Returns ``(SignedWeights, LassoFit)``.
    """
    cv = None
    if lam is None:
        lam, cv = cv_lambda(panel, standardize=standardize)
    t0 = panel.t0_index
    sw = lasso_regression(panel.y_donors[:t0], panel.y_treated[:t0], lam, standardize)
    synthetic = sw.intercept + panel.y_donors @ sw.w
    fit = LassoFit(panel.times, t0, panel.y_treated.copy(), synthetic, donors=panel.donors,
                   weights=sw, cv_errors=cv)
    return sw, fit
