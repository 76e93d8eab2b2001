"""Generalized synthetic control with an interactive fixed-effects model.

Controls follow ``Y_it = m + a_i + x_t + f_t'l_i + e_it``. The model is
estimated on the control units only; the treated unit's intercept and
loadings come from a regression of its pre-period outcomes on the estimated
factors, which yields a counterfactual for every period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from ._parallel import pmap
from .errors import ConfigError, InsufficientPrePeriods, NonConvergence, RankDeficiency
from .panel import Panel
from .scm import SeriesFit

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FactorModel:
    r: int
    factors: np.ndarray  # T x r, orthonormal columns
    loadings: np.ndarray  # J x r
    unit_effects: np.ndarray  # J, sums to zero
    time_effects: np.ndarray  # T, includes the grand mean
    sigma2: float
    iterations: int = 0
    history: tuple[float, ...] = ()

    def fitted(self) -> np.ndarray:
        """T x J fitted control outcomes."""
        return self.time_effects[:, None] + self.unit_effects[None, :] + self.factors @ self.loadings.T


def _additive(R):
    mu = R.mean()
    return mu + (R.mean(axis=1) - mu), R.mean(axis=0) - mu


def _fit_matrix(Y, r, tol=1e-8, max_iter=1000, F0=None) -> FactorModel:
    T, J = Y.shape
    if r > min(J, T) - 2:
        raise ConfigError(f"r={r} exceeds min(J, T) - 2 = {min(J, T) - 2}")
    if r == 0:
        xi, alpha = _additive(Y)
        resid = Y - xi[:, None] - alpha[None, :]
        obj = float(np.sum(resid**2))
        return FactorModel(0, np.zeros((T, 0)), np.zeros((J, 0)), alpha, xi, obj / Y.size, 1, (obj,))

    FL = np.zeros_like(Y) if F0 is None else F0 @ (F0.T @ Y)
    history = []
    prev = math.inf
    for it in range(1, max_iter + 1):
        xi, alpha = _additive(Y - FL)
        Z = Y - xi[:, None] - alpha[None, :]
        U, s, Vt = np.linalg.svd(Z, full_matrices=False)
        if s[0] <= 0 or s[r - 1] <= RANK_TOL * s[0]:
            raise RankDeficiency(f"residual matrix has numerical rank < {r}")
        F = U[:, :r]
        L = Vt[:r].T * s[:r]
        FL = F @ L.T
        obj = float(np.sum((Z - FL) ** 2))
        history.append(obj)
        if abs(prev - obj) <= tol * max(obj, 1e-300) or obj <= 1e-300:
            break
        prev = obj
    else:
        raise NonConvergence(max_iter, "interactive fixed-effects ALS")

    # sign convention: first non-negligible loading of each factor positive
    for k in range(r):
        col = L[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
        if nz.size and col[nz[0]] < 0:
            L[:, k] *= -1
            F[:, k] *= -1
    return FactorModel(r, F, L, alpha, xi, obj / Y.size, it, tuple(history))


def fit_ife(panel: Panel, r: int, tol: float = 1e-8, max_iter: int = 1000) -> FactorModel:
    """Alternate additive effects and an SVD factor step on the controls."""
    return _fit_matrix(panel.y_donors, r, tol, max_iter)


def treated_projection(model: FactorModel, y1, t0_index: int):
    """Regress treated pre-period outcomes on the factors.

    Returns ``(intercept, loadings, counterfactual)``.
    """
    target = np.asarray(y1, dtype=float) - model.time_effects
    X = np.column_stack([np.ones(len(target)), model.factors])
    if t0_index < X.shape[1]:
        raise InsufficientPrePeriods(f"{t0_index} pre-periods cannot identify {model.r} loadings")
    coef, *_ = np.linalg.lstsq(X[:t0_index], target[:t0_index], rcond=None)
    return float(coef[0]), coef[1:], model.time_effects + X @ coef


def _loo_mspe(model: FactorModel, y1, n_pre: int) -> float:
    target = (np.asarray(y1) - model.time_effects)[:n_pre]
    X = np.column_stack([np.ones(n_pre), model.factors[:n_pre]])
    if n_pre <= X.shape[1]:
        return math.inf
    XtX_inv = np.linalg.pinv(X.T @ X)
    h = np.einsum("ij,jk,ik->i", X, XtX_inv, X)
    e = target - X @ (XtX_inv @ X.T @ target)
    if np.any(h > 1 - 1e-12):
        return math.inf
    return float(np.mean((e / (1 - h)) ** 2))


def cross_validate_factors(panel: Panel, r_max: int,
                           min_improvement: float = 0.05) -> tuple[int, dict[int, float]]:
    """Leave-one-pre-period-out choice of the factor count.

    Returns ``(r, scores)``. Scores within ``min_improvement`` (relative) of
    a smaller ``r`` count as ties and go to the smaller ``r``; factor counts
    that exceed the numerical rank of the controls score ``inf``.
    """
    limit = min(panel.n_donors, panel.t0_index) - 2
    if r_max > limit:
        raise ConfigError(f"r_max={r_max} exceeds min(J, T0) - 2 = {limit}")
    scores = {}
    for r in range(r_max + 1):
        try:
            model = fit_ife(panel, r)
        except RankDeficiency:
            scores[r] = math.inf
            continue
        scores[r] = _loo_mspe(model, panel.y_treated, panel.t0_index)
    r, best = 0, scores[0]
    for k in range(1, r_max + 1):
        # absolute floor keeps exact-fit cases from being decided by rounding
        if scores[k] < best * (1 - min_improvement) - 1e-24:
            r, best = k, scores[k]
    return r, scores


@dataclass
class GscConfig:
    r: int | None = None
    r_max: int = 5
    min_improvement: float = 0.05
    n_boot: int = 1000
    seed: int = 0
    placebo: bool = True
    jobs: int = 1


@dataclass(frozen=True, eq=False)
class GscFit(SeriesFit):
    model: FactorModel | None = None
    treated_intercept: float = 0.0
    treated_loadings: np.ndarray = field(default_factory=lambda: np.zeros(0))
    se: float = math.nan
    ci: tuple[float, float] = (math.nan, math.nan)
    p_value: float = math.nan
    placebo_p: float | None = None
    placebo_time: int | None = None
    cv_scores: dict[int, float] = field(default_factory=dict)
    boot_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def counterfactual(self) -> np.ndarray:
        return self.synthetic

    def summary(self) -> dict:
        out = super().summary()
        out.update(
            r=self.model.r if self.model else None,
            se=self.se,
            ci=list(self.ci),
            p_value=self.p_value,
            placebo_p=self.placebo_p,
            placebo_time=self.placebo_time,
            cv_scores={str(k): v for k, v in self.cv_scores.items()},
        )
        return out


def _att_from_matrix(Y_ctrl, y1, t0_index, r, F0=None):
    model = _fit_matrix(Y_ctrl, r, F0=F0)
    _, _, cf = treated_projection(model, y1, t0_index)
    return float(np.mean((y1 - cf)[t0_index:]))


def _boot_chunk(seeds, fitted, resid, pred_errors, cf, t0_index, r, F0):
    T, J = resid.shape
    out = []
    for s in seeds:
        rng = np.random.default_rng(s)
        cols = rng.integers(0, J, size=J)
        Y_star = fitted + resid[:, cols]
        y_star = cf + pred_errors[int(rng.integers(0, len(pred_errors)))]
        try:
            out.append(_att_from_matrix(Y_star, y_star, t0_index, r, F0))
        except (RankDeficiency, NonConvergence):
            out.append(math.nan)
    return out


def prediction_errors(Y_ctrl, t0_index: int, r: int) -> np.ndarray:
    """Out-of-sample errors with each control in turn as the pseudo-treated unit.

    Returns a (J', T) array; controls whose refit fails are skipped.
    """
    out = []
    for j in range(Y_ctrl.shape[1]):
        rest = np.delete(Y_ctrl, j, axis=1)
        try:
            model = _fit_matrix(rest, r)
            _, _, cf = treated_projection(model, Y_ctrl[:, j], t0_index)
        except (RankDeficiency, NonConvergence, ConfigError, InsufficientPrePeriods):
            continue
        out.append(Y_ctrl[:, j] - cf)
    return np.array(out)


def bootstrap_errors(model: FactorModel, Y_ctrl, cf, t0_index, n_boot, seed, jobs=1):
    """ATT estimates on resampled panels generated without an effect.

    Controls get their fitted values plus resampled residual columns. The
    treated unit gets its counterfactual plus one of the controls'
    out-of-sample prediction errors, so the replicates carry the error of
    estimating its loadings as well as its idiosyncratic noise.
    """
    resid = Y_ctrl - model.fitted()
    pred = prediction_errors(Y_ctrl, t0_index, model.r)
    if len(pred) == 0:
        pred = resid.T
    seeds = np.random.SeedSequence(seed).spawn(n_boot)
    n_chunks = max(1, min(jobs, n_boot)) * 4
    chunks = [seeds[i::n_chunks] for i in range(n_chunks)]
    fn = partial(_boot_chunk, fitted=model.fitted(), resid=resid, pred_errors=pred, cf=cf,
                 t0_index=t0_index, r=model.r, F0=model.factors)
    parts = pmap(fn, chunks, jobs)
    # undo the striding so replicate order matches seed order
    errs = np.empty(n_boot)
    for i, part in enumerate(parts):
        errs[i::n_chunks] = part
    return errs


def combined_placebo(panel: Panel, model: FactorModel):
    """In-time placebo date picked by CV, ranked against in-space placebos.

    Candidate dates leave at least ``r + 2`` earlier periods. The date whose
    pre-date fit has the smallest leave-one-out error is used; the treated
    unit's placebo effect over [date, T0) is then ranked among the same
    statistic for every control refitted as a pseudo-treated unit.
    Returns ``(p_value, placebo_time)``.
    """
    r = model.r
    t0 = panel.t0_index
    y1 = panel.y_treated
    Y = panel.y_donors
    candidates = list(range(r + 3, t0))
    if not candidates:
        return None, None
    scores = [_loo_mspe(model, y1, s) for s in candidates]
    start = candidates[int(np.argmin(scores))]

    def effect(Yc, y):
        m = _fit_matrix(Yc, r)
        trunc = FactorModel(r, m.factors[:t0], m.loadings, m.unit_effects, m.time_effects[:t0], m.sigma2)
        _, _, cf = treated_projection(trunc, y[:t0], start)
        return float(np.mean((y[:t0] - cf)[start:]))

    mine = effect(Y, y1)
    others = []
    for j in range(Y.shape[1]):
        rest = np.delete(Y, j, axis=1)
        try:
            others.append(effect(rest, Y[:, j]))
        except (RankDeficiency, NonConvergence, ConfigError):
            continue
    others = np.abs(np.array(others))
    p = (1 + np.sum(others >= abs(mine))) / (1 + len(others))
    return float(p), int(panel.times[start])


def estimate_att(panel: Panel, config: GscConfig | None = None) -> GscFit:
    config = config or GscConfig()
    scores = {}
    if config.r is None:
        r_max = min(config.r_max, min(panel.n_donors, panel.t0_index) - 2)
        r, scores = cross_validate_factors(panel, max(r_max, 0), config.min_improvement)
    else:
        r = config.r
    model = fit_ife(panel, r)
    a1, l1, cf = treated_projection(model, panel.y_treated, panel.t0_index)
    base = GscFit(panel.times, panel.t0_index, panel.y_treated.copy(), cf)
    att = base.att

    se, ci, p = math.nan, (math.nan, math.nan), math.nan
    errs = np.zeros(0)
    if config.n_boot > 0:
        errs = bootstrap_errors(model, panel.y_donors, cf, panel.t0_index, config.n_boot,
                                config.seed, config.jobs)
        ok = errs[np.isfinite(errs)]
        se = float(np.std(ok, ddof=1))
        lo_q, hi_q = np.quantile(ok, [0.025, 0.975])
        # replicates estimate att_hat - att, so the interval pivots on them
        ci = (att - float(hi_q), att - float(lo_q))
        p = float(np.mean(np.abs(ok) >= abs(att)))

    placebo_p = placebo_time = None
    if config.placebo:
        placebo_p, placebo_time = combined_placebo(panel, model)

    return GscFit(
        panel.times, panel.t0_index, panel.y_treated.copy(), cf,
        model=model, treated_intercept=a1, treated_loadings=l1, se=se, ci=ci, p_value=p,
        placebo_p=placebo_p, placebo_time=placebo_time, cv_scores=scores, boot_errors=errs,
    )
