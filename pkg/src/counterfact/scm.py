"""Classical synthetic control: simplex-weighted donors, nested V search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, InsufficientPrePeriods, NegativeBirths
from .panel import Panel
from .qp import RIDGE, active_set_qp, simplex_qp


@dataclass(frozen=True, eq=False)
class SeriesFit:
    """Actual vs. counterfactual series for one treated unit."""

    times: tuple[int, ...]
    t0_index: int
    actual: np.ndarray
    synthetic: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        return self.actual - self.synthetic

    @property
    def effects(self) -> np.ndarray:
        return self.gaps[self.t0_index :]

    @property
    def post_times(self) -> tuple[int, ...]:
        return self.times[self.t0_index :]

    @property
    def att(self) -> float:
        return float(np.mean(self.effects))

    @property
    def pre_mspe(self) -> float:
        return float(np.mean(self.gaps[: self.t0_index] ** 2))

    @property
    def post_mspe(self) -> float:
        return float(np.mean(self.effects**2))

    @property
    def pre_rmse(self) -> float:
        return math.sqrt(self.pre_mspe)

    @property
    def post_rmse(self) -> float:
        return math.sqrt(self.post_mspe)

    @property
    def rmse_ratio(self) -> float:
        return self.post_rmse / self.pre_rmse if self.pre_rmse > 0 else math.inf

    @property
    def pre_bias(self) -> np.ndarray:
        """Relative pre-period discrepancy (synthetic - actual) / actual."""
        a = self.actual[: self.t0_index]
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.synthetic[: self.t0_index] - a) / a

    def series_rows(self):
        for t, a, s in zip(self.times, self.actual, self.synthetic):
            yield t, float(a), float(s), float(a - s)

    def summary(self) -> dict:
        return {
            "att": self.att,
            "pre_rmse": self.pre_rmse,
            "post_rmse": self.post_rmse,
            "effects": dict(zip(map(str, self.post_times), map(float, self.effects))),
        }


@dataclass(frozen=True)
class PredictorSet:
    """Matching variables: ``x_treated`` (k,) and ``x_donors`` (k, J).

    ``periods`` holds the pre-period each row was measured in, or ``None``
    for time-invariant covariate rows.
    """

    x_treated: np.ndarray
    x_donors: np.ndarray
    labels: tuple[str, ...]
    periods: tuple[int | None, ...]

    @property
    def k(self) -> int:
        return len(self.labels)

    def rows(self, mask) -> "PredictorSet":
        idx = np.flatnonzero(mask)
        return PredictorSet(
            self.x_treated[idx],
            self.x_donors[idx],
            tuple(self.labels[i] for i in idx),
            tuple(self.periods[i] for i in idx),
        )


@dataclass(frozen=True, eq=False)
class ScmFit(SeriesFit):
    donors: tuple[str, ...] = ()
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    predictor_labels: tuple[str, ...] = ()
    objective: float = 0.0
    hull_distance: float = 0.0
    cv_mspe: float | None = None

    def weight_of(self, unit: str) -> float:
        return float(self.weights[self.donors.index(unit)])

    def nonzero_donors(self, tol: float = 1e-6) -> tuple[str, ...]:
        return tuple(u for u, w in zip(self.donors, self.weights) if w > tol)

    def summary(self) -> dict:
        out = super().summary()
        out.update(
            weights=dict(zip(self.donors, map(float, self.weights))),
            v=dict(zip(self.predictor_labels, map(float, self.v))),
            objective=self.objective,
            hull_distance=self.hull_distance,
            cv_mspe=self.cv_mspe,
        )
        return out


@dataclass
class ScmConfig:
    """Options for :func:`fit`.

    v_mode is one of ``optimized``, ``uniform`` or ``fixed`` (then ``v`` must
    be given). ``split`` is the share of pre-periods used for training in the
    V search; ``max_evals`` caps objective evaluations per Nelder-Mead
    restart (``None``: 100 per free parameter).
    """

    v_mode: str = "optimized"
    v: Sequence[float] | None = None
    split: float = 0.5
    restarts: int = 20
    seed: int = 0
    max_evals: int | None = 200
    covariates: Mapping[str, Mapping[str, float]] | None = None

    def __post_init__(self):
        if self.v_mode not in ("optimized", "uniform", "fixed"):
            raise ConfigError(f"unknown v_mode {self.v_mode!r}")
        if self.v_mode == "fixed" and self.v is None:
            raise ConfigError("v_mode='fixed' requires v")
        if not 0 < self.split < 1:
            raise ConfigError("split must lie strictly between 0 and 1")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")


def build_predictors(panel: Panel, covariates=None) -> PredictorSet:
    """Every pre-period outcome as a predictor, plus optional covariate rows."""
    pre = panel.outcomes[:, : panel.t0_index]
    tr = panel.treated_index
    donor_rows = [i for i in range(len(panel.units)) if i != tr]
    x1 = pre[tr].copy()
    x0 = pre[donor_rows].T.copy()
    labels = [str(t) for t in panel.times[: panel.t0_index]]
    periods: list[int | None] = list(panel.times[: panel.t0_index])
    for name, values in (covariates or {}).items():
        row = np.array([float(values[u]) for u in panel.units])
        x1 = np.append(x1, row[tr])
        x0 = np.vstack([x0, row[donor_rows]])
        labels.append(str(name))
        periods.append(None)
    return PredictorSet(x1, x0, tuple(labels), tuple(periods))


def normalize_v(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or np.any(v < 0) or not np.all(np.isfinite(v)) or v.sum() <= 0:
        raise ConfigError("V diagonal must be finite, non-negative and not all zero")
    return v / v.sum()


def objective(pred: PredictorSet, v, w) -> float:
    r = pred.x_treated - pred.x_donors @ w
    return float(r @ (np.asarray(v) * r))


def _qp_terms(pred: PredictorSet, v):
    X0 = pred.x_donors
    H = X0.T @ (v[:, None] * X0)
    H[np.diag_indices_from(H)] += RIDGE * max(float(np.mean(np.diag(H))), 1e-300)
    c = -X0.T @ (v * pred.x_treated)
    return H, c


def solve_weights(pred: PredictorSet, v) -> np.ndarray:
    """Donor weights minimising the V-weighted predictor discrepancy."""
    return simplex_qp(*_qp_terms(pred, np.asarray(v, dtype=float)))


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _search_v(train: PredictorSet, y_val_treated, y_val_donors, restarts, rng, max_evals):
    """Nelder-Mead over softmax-parametrised V; returns (v, validation MSPE)."""
    m = train.k
    if m == 1:
        v = np.ones(1)
        w = solve_weights(train, v)
        return v, float(np.mean((y_val_treated - y_val_donors @ w) ** 2))

    warm = [None]

    def loss(z):
        # consecutive simplex vertices are close, so warm-starting the
        # active-set solver from the previous optimum is cheap
        w = active_set_qp(*_qp_terms(train, _softmax(z)), w0=warm[0])
        warm[0] = w
        return float(np.mean((y_val_treated - y_val_donors @ w) ** 2))

    starts = [np.zeros(m)]
    starts += [np.log(rng.dirichlet(np.ones(m))) for _ in range(restarts - 1)]
    best_v, best_loss = None, math.inf
    for z0 in starts:
        res = minimize(
            loss,
            z0,
            method="Nelder-Mead",
            options={"maxfev": max_evals or 100 * m, "xatol": 1e-6, "fatol": 1e-12},
        )
        val = loss(res.x)
        if val < best_loss:  # strict: lowest-index restart wins ties
            best_v, best_loss = _softmax(res.x), val
    return best_v, best_loss


def optimize_v(panel: Panel, pred: PredictorSet, split: float = 0.5, restarts: int = 20,
               seed: int = 0, max_evals: int | None = None):
    """Cross-fitted predictor weights. Returns ``(v, w, validation_mspe)``.

    The pre-period is cut into a training window (first ``ceil(split*T0)``
    periods) and a validation window. V entries for training-window
    predictors are chosen so that weights fitted on those predictors best
    track the validation-window outcomes; the roles are then swapped to set
    the remaining entries. Covariate rows take part in both folds and get the
    average of their two values.
    """
    t0 = panel.t0_index
    if t0 < 4:
        raise InsufficientPrePeriods(f"need at least 4 pre-periods, have {t0}")
    n_train = math.ceil(t0 * split)
    n_train = min(max(n_train, 2), t0 - 2)
    pre_times = panel.times[:t0]
    windows = (set(pre_times[:n_train]), set(pre_times[n_train:]))

    y1 = panel.y_treated
    y0 = panel.y_donors
    rng = np.random.default_rng(seed)
    is_cov = np.array([p is None for p in pred.periods])
    v = np.zeros(pred.k)
    cov_share = np.zeros(pred.k)
    losses = []
    for fit_win, val_win in (windows, windows[::-1]):
        rows = np.array([p in fit_win for p in pred.periods]) | is_cov
        val_cols = [i for i, t in enumerate(pre_times) if t in val_win]
        vf, lf = _search_v(pred.rows(rows), y1[val_cols], y0[val_cols], restarts, rng, max_evals)
        n_own = int((rows & ~is_cov).sum())
        weight = n_own / max(int((~is_cov).sum()), 1) if n_own else 1.0
        v[rows & ~is_cov] += vf[~is_cov[rows]] * weight
        cov_share[rows & is_cov] += vf[is_cov[rows]] * weight / 2
        losses.append(lf)
    v = normalize_v(v + cov_share)
    w = solve_weights(pred, v)
    return v, w, float(np.mean(losses))


def _hull_distance(pred: PredictorSet) -> float:
    u = np.full(pred.k, 1.0 / pred.k)
    w = solve_weights(pred, u)
    return math.sqrt(objective(pred, u, w))


def fit(panel: Panel, config: ScmConfig | None = None) -> ScmFit:
    config = config or ScmConfig()
    pred = build_predictors(panel, config.covariates)
    cv = None
    if config.v_mode == "optimized":
        v, w, cv = optimize_v(panel, pred, config.split, config.restarts, config.seed,
                              config.max_evals)
    else:
        if config.v_mode == "uniform":
            v = np.full(pred.k, 1.0 / pred.k)
        else:
            v = normalize_v(config.v)
            if v.shape[0] != pred.k:
                raise ConfigError(f"fixed V has length {v.shape[0]}, expected {pred.k}")
        w = solve_weights(pred, v)
    return make_fit(panel, w, v, pred, cv)


def make_fit(panel: Panel, w, v, pred: PredictorSet, cv_mspe=None) -> ScmFit:
    synthetic = panel.y_donors @ w
    return ScmFit(
        times=panel.times,
        t0_index=panel.t0_index,
        actual=panel.y_treated.copy(),
        synthetic=synthetic,
        donors=panel.donors,
        weights=w,
        v=v,
        predictor_labels=pred.labels,
        objective=objective(pred, v, w),
        hull_distance=_hull_distance(pred),
        cv_mspe=cv_mspe,
    )


def gap_to_deaths(gap, live_births):
    """Convert a rate gap (per 1,000 live births) into a count of deaths."""
    births = np.asarray(live_births, dtype=float)
    if np.any(births < 0):
        raise NegativeBirths("live births must be non-negative")
    out = np.asarray(gap, dtype=float) * births / 1000.0
    return float(out) if out.ndim == 0 else out
