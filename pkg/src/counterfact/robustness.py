"""Robustness checks around a baseline synthetic control fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import stats

from ._parallel import pmap
from .errors import (
    EmptyDonorPool,
    InsufficientObservations,
    SingularDesign,
    TooFewDonorsForLevel,
    UnknownUnit,
)
from .panel import Panel, restrict_donors
from .scm import ScmConfig, ScmFit, fit


def _drop_one(unit: str, panel: Panel, config: ScmConfig) -> ScmFit:
    keep = [u for u in panel.donors if u != unit]
    return fit(restrict_donors(panel, keep), config)


def leave_one_out(panel: Panel, config: ScmConfig | None = None, units=None,
                  baseline: ScmFit | None = None, jobs: int = 1) -> dict[str, ScmFit]:
    """Refit with each listed donor removed.

    By default every donor with non-zero baseline weight is dropped in turn.
    """
    config = config or ScmConfig()
    if panel.n_donors < 2:
        raise EmptyDonorPool("removing a donor would leave the pool empty")
    if units is None:
        baseline = baseline or fit(panel, config)
        units = baseline.nonzero_donors()
    units = list(units)
    for u in units:
        if u not in panel.donors:
            raise UnknownUnit(u)
    fits = pmap(partial(_drop_one, panel=panel, config=config), units, jobs)
    return dict(zip(units, fits))


@dataclass(frozen=True)
class DiffTrendResult:
    chi2: float
    p_value: float
    n_lags: int
    df: int
    coefficients: dict[str, float]


def diff_trend_test(gaps, t0_index: int, n_lags: int = 2, lag_form: str = "diff",
                    trend: bool = False, cov: str = "HC3") -> DiffTrendResult:
    """Wald test for a break in the gap series at ``t0_index``.

    Regresses ``gap_t`` on an intercept, a post-period indicator and
    ``n_lags`` lags of the gap (first differences when ``lag_form='diff'``,
    levels when ``'level'``). With ``trend=True`` a linear trend and its
    interaction with the post indicator are added and the indicator and
    interaction are tested jointly. The statistic uses a
    heteroskedasticity-robust covariance (``HC0``..``HC3``) or the classical
    one (``'classical'``) and is referred to a chi-square distribution.
    """
    g = np.asarray(gaps, dtype=float)
    T = g.shape[0]
    if lag_form not in ("diff", "level"):
        raise ValueError("lag_form must be 'diff' or 'level'")
    if t0_index < n_lags + 2 or T - t0_index < n_lags + 2:
        raise InsufficientObservations(
            f"need >= {n_lags + 2} observations on each side of the break"
        )
    src = np.r_[np.nan, np.diff(g)] if lag_form == "diff" else g
    start = n_lags + (1 if lag_form == "diff" else 0)
    t = np.arange(T, dtype=float)
    post = (t >= t0_index).astype(float)
    cols = [np.ones(T), post]
    names = ["const", "post"]
    if trend:
        cols += [t, t * post]
        names += ["trend", "trend_x_post"]
    for lag in range(1, n_lags + 1):
        cols.append(np.r_[np.full(lag, np.nan), src[:-lag]])
        names.append(f"{'d' if lag_form == 'diff' else ''}gap_lag{lag}")
    X = np.column_stack(cols)[start:]
    y = g[start:]
    n, k = X.shape
    if n <= k or np.linalg.matrix_rank(X) < k:
        raise SingularDesign("break regression design is rank deficient")

    XtX_inv = np.linalg.inv(X.T @ X)
    beta = XtX_inv @ X.T @ y
    e = y - X @ beta
    if cov == "classical":
        V = XtX_inv * (e @ e) / (n - k)
    else:
        h = np.einsum("ij,jk,ik->i", X, XtX_inv, X)
        scale = {
            "HC0": np.ones(n),
            "HC1": np.full(n, n / (n - k)),
            "HC2": 1.0 / (1.0 - h),
            "HC3": 1.0 / (1.0 - h) ** 2,
        }[cov]
        V = XtX_inv @ (X.T * (e**2 * scale)) @ X @ XtX_inv

    tested = [1, 3] if trend else [1]
    rb = beta[tested]
    Vr = V[np.ix_(tested, tested)]
    if np.allclose(rb, 0.0, atol=1e-14):
        chi2 = 0.0
    else:
        try:
            chi2 = float(rb @ np.linalg.solve(Vr, rb))
        except np.linalg.LinAlgError:
            chi2 = math.inf
        if not np.isfinite(chi2) or np.max(np.abs(Vr)) <= 1e-300:
            chi2 = math.inf
    p = float(stats.chi2.sf(chi2, len(tested)))
    return DiffTrendResult(chi2, p, n_lags, len(tested), dict(zip(names, map(float, beta))))


@dataclass(frozen=True)
class SparsityCI:
    times: tuple[int, ...]
    gap: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float
    donors: tuple[str, ...]
    n_null: int

    def rows(self):
        for t, lo, hi, g in zip(self.times, self.lo, self.hi, self.gap):
            yield t, float(lo), float(hi), float(g)


def sparsity_ci(panel: Panel, baseline: ScmFit, level: float = 0.95,
                config: ScmConfig | None = None, jobs: int = 1) -> SparsityCI:
    """Per-year intervals for the post-period gaps by rank-test inversion.

    Placebo gaps are re-estimated inside the sparse pool of donors that carry
    weight in ``baseline`` (each such donor in turn, matched on the others)
    and pooled over post-periods into one null sample of absolute gaps. A
    hypothesised effect is kept when its residual gap is not in the upper
    ``1 - level`` tail of that sample, so each interval is the point gap
    plus/minus an order statistic.
    """
    config = config or ScmConfig()
    donors = baseline.nonzero_donors()
    alpha = 1.0 - level
    if len(donors) < 2:
        raise TooFewDonorsForLevel(
            f"{len(donors)} weighted donor(s): no placebo can be matched inside the sparse pool"
        )
    sparse = restrict_donors(panel, list(donors))
    null = []
    fits = pmap(
        partial(_sparse_placebo, panel=sparse, config=config), list(donors), jobs
    )
    for f in fits:
        null.extend(np.abs(f.effects))
    null = np.sort(np.asarray(null))[::-1]
    m = math.floor(alpha * (len(null) + 1))
    if m < 1:
        raise TooFewDonorsForLevel(
            f"{len(null)} placebo gaps cannot support a {level:.0%} interval"
        )
    radius = null[m - 1]
    gap = baseline.effects
    return SparsityCI(baseline.post_times, gap, gap - radius, gap + radius, level, donors, len(null))


def _sparse_placebo(unit: str, panel: Panel, config: ScmConfig) -> ScmFit:
    return fit(panel.as_treated(unit, exclude=[panel.treated]), config)
