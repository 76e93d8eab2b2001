"""Synthetic difference-in-differences.

Unit weights ``omega`` balance pre-period trends across donors (up to an
intercept, with a ridge penalty); time weights ``lambda`` balance the
pre-periods against the post-period average. The estimate is the weighted
two-way difference of treated and control means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from ._parallel import pmap
from .errors import TooFewDonorsForPlaceboVariance
from .panel import Panel
from .qp import simplex_qp
from .scm import SeriesFit


@dataclass(frozen=True, eq=False)
class SdidWeights:
    omega: np.ndarray
    lambda_t: np.ndarray
    zeta: float

    def __post_init__(self):
        for name in ("omega", "lambda_t"):
            w = getattr(self, name)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-8:
                raise ValueError(f"{name} must lie on the simplex")

    @classmethod
    def uniform(cls, n_donors: int, n_pre: int) -> "SdidWeights":
        return cls(np.full(n_donors, 1.0 / n_donors), np.full(n_pre, 1.0 / n_pre), 0.0)


def noise_level(Y0_pre) -> float:
    """Standard deviation of first differences of control pre-period outcomes (T0 x J)."""
    d = np.diff(np.asarray(Y0_pre, dtype=float), axis=0)
    return float(np.std(d, ddof=1)) if d.size > 1 else 0.0


def default_zeta(Y0_pre, n_post: int, n_treated: int = 1) -> float:
    return (n_treated * n_post) ** 0.25 * noise_level(Y0_pre)


def unit_weights(Y0_pre, y1_pre, zeta: float) -> np.ndarray:
    """min_{w0, w in simplex} |w0 + Y0_pre w - y1_pre|^2 + zeta^2 T0 |w|^2."""
    Y0 = np.asarray(Y0_pre, dtype=float)
    y1 = np.asarray(y1_pre, dtype=float)
    T0, J = Y0.shape
    # the free intercept is profiled out by demeaning over time
    Xc = Y0 - Y0.mean(axis=0)
    yc = y1 - y1.mean()
    H = Xc.T @ Xc + zeta**2 * T0 * np.eye(J)
    H[np.diag_indices_from(H)] += 1e-12 * max(float(np.mean(np.diag(H))), 1e-300)
    return simplex_qp(H, -Xc.T @ yc)


def time_weights(Y0_pre, Y0_post, zeta: float = 0.0) -> np.ndarray:
    """min_{l0, l in simplex} sum_j (l0 + Y0_pre[:, j]'l - mean_post_j)^2 + zeta^2 J |l|^2."""
    Y0 = np.asarray(Y0_pre, dtype=float)
    T0, J = Y0.shape
    if T0 == 1:
        return np.ones(1)
    target = np.asarray(Y0_post, dtype=float).mean(axis=0)
    # rows are units, columns periods; demeaning across units profiles out l0
    A = Y0.T - Y0.T.mean(axis=0)
    b = target - target.mean()
    H = A.T @ A + zeta**2 * J * np.eye(T0)
    H[np.diag_indices_from(H)] += 1e-12 * max(float(np.mean(np.diag(H))), 1e-300)
    return simplex_qp(H, -A.T @ b)


def sdid_weights(Y0, y1, t0_index: int) -> SdidWeights:
    """Weights from arrays: ``Y0`` is T x J, ``y1`` has length T."""
    Y0 = np.asarray(Y0, dtype=float)
    pre, post = Y0[:t0_index], Y0[t0_index:]
    zeta = default_zeta(pre, post.shape[0])
    omega = unit_weights(pre, np.asarray(y1, dtype=float)[:t0_index], zeta)
    lam = time_weights(pre, post, 1e-6 * noise_level(pre))
    return SdidWeights(omega, lam, zeta)


def solve_sdid_weights(panel: Panel) -> SdidWeights:
    return sdid_weights(panel.y_donors, panel.y_treated, panel.t0_index)


def sdid_att(Y0, y1, t0_index: int, weights: SdidWeights) -> float:
    Y0 = np.asarray(Y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    lam, om = weights.lambda_t, weights.omega
    d_treated = y1[t0_index:].mean() - lam @ y1[:t0_index]
    d_control = Y0[t0_index:].mean(axis=0) - lam @ Y0[:t0_index]
    return float(d_treated - om @ d_control)


def _placebo_att(j: int, Y0, t0_index: int) -> float:
    rest = np.delete(Y0, j, axis=1)
    y = Y0[:, j]
    return sdid_att(rest, y, t0_index, sdid_weights(rest, y, t0_index))


def placebo_se(Y0, t0_index: int, jobs: int = 1) -> tuple[float, np.ndarray]:
    """Spread of estimates with each control as the pseudo-treated unit."""
    Y0 = np.asarray(Y0, dtype=float)
    J = Y0.shape[1]
    if J < 2:
        raise TooFewDonorsForPlaceboVariance(f"placebo variance needs >= 2 donors, have {J}")
    taus = np.array(pmap(partial(_placebo_att, Y0=Y0, t0_index=t0_index), range(J), jobs))
    return math.sqrt(float(np.mean((taus - taus.mean()) ** 2))), taus


@dataclass(frozen=True, eq=False)
class SdidFit(SeriesFit):
    weights: SdidWeights | None = None
    donors: tuple[str, ...] = ()
    tau: float = math.nan
    se: float = math.nan
    p_value: float = math.nan
    ci: tuple[float, float] = (math.nan, math.nan)
    placebo_taus: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def summary(self) -> dict:
        out = super().summary()
        out.update(
            tau=self.tau,
            se=self.se,
            p_value=self.p_value,
            ci=list(self.ci),
            zeta=self.weights.zeta if self.weights else None,
            omega=dict(zip(self.donors, map(float, self.weights.omega))) if self.weights else {},
            lambda_t=dict(zip(map(str, self.times[: self.t0_index]),
                              map(float, self.weights.lambda_t))) if self.weights else {},
        )
        return out


def estimate_att(panel: Panel, weights: SdidWeights | None = None, jobs: int = 1,
                 inference: bool = True) -> SdidFit:
    """Weighted two-way contrast with placebo-variance inference.

    The reported series is the omega-weighted donor average shifted by the
    lambda-weighted pre-period difference, so that its mean post-period gap
    equals ``tau``.
    """
    weights = weights or solve_sdid_weights(panel)
    Y0, y1, t0 = panel.y_donors, panel.y_treated, panel.t0_index
    tau = sdid_att(Y0, y1, t0, weights)
    base = Y0 @ weights.omega
    shift = float(weights.lambda_t @ (y1[:t0] - base[:t0]))
    synthetic = base + shift

    se, p, ci, taus = math.nan, math.nan, (math.nan, math.nan), np.zeros(0)
    if inference:
        se, taus = placebo_se(Y0, t0, jobs)
        if se > 0:
            p = float(2 * stats.norm.sf(abs(tau) / se))
        else:
            p = 0.0 if tau != 0 else 1.0
        ci = (tau - 1.96 * se, tau + 1.96 * se)
    return SdidFit(panel.times, t0, y1.copy(), synthetic, weights=weights, donors=panel.donors,
                   tau=tau, se=se, p_value=p, ci=ci, placebo_taus=taus)
