"""Ground truth for tests: a latent factor panel simulator and a grid solver."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError, DonorPoolTooLarge
from .panel import Panel
from .scm import PredictorSet


@dataclass(frozen=True)
class FactorDgpSpec:
    """Parameters of ``Y = eta_t + mu_t'phi_i + sigma*eps`` (+ effect).

    Unit 0 is treated; ``T0`` is the number of pre-periods. ``level`` is added
    to every time effect so that simulated rates stay positive.
    """

    J: int = 10
    T: int = 30
    T0: int = 19
    r: int = 2
    eta: float = 1.0
    factor_scale: float = 1.0
    loading_scale: float = 1.0
    noise_sigma: float = 0.1
    effect: float | tuple[float, ...] = 0.0
    seed: int = 0
    level: float = 20.0
    start: int = 1
    covariate_term: np.ndarray | None = None

    def __post_init__(self):
        if self.J < 1 or self.r < 0 or self.noise_sigma < 0:
            raise ConfigError("invalid DGP dimensions")
        if not 2 <= self.T0 <= self.T - 1:
            raise ConfigError("T0 must leave >= 2 pre-periods and >= 1 post-period")


@dataclass(frozen=True)
class SimulatedPanel:
    panel: Panel
    untreated: np.ndarray  # (J+1) x T outcomes without the effect
    factors: np.ndarray  # T x r
    loadings: np.ndarray  # (J+1) x r
    time_effects: np.ndarray


def simulate(spec: FactorDgpSpec) -> SimulatedPanel:
    n = spec.J + 1
    # one independent stream per component, so changing e.g. r does not
    # reshuffle the noise draws
    ss = np.random.SeedSequence(spec.seed).spawn(4)
    g_eta, g_f, g_l, g_e = (np.random.default_rng(s) for s in ss)
    eta = spec.level + spec.eta * g_eta.standard_normal(spec.T)
    F = spec.factor_scale * g_f.standard_normal((spec.T, spec.r))
    L = spec.loading_scale * g_l.standard_normal((n, spec.r))
    eps = g_e.standard_normal((n, spec.T))
    y0 = eta[None, :] + L @ F.T + spec.noise_sigma * eps
    if spec.covariate_term is not None:
        y0 = y0 + np.asarray(spec.covariate_term, dtype=float)
    y = y0.copy()
    y[0, spec.T0 :] += np.broadcast_to(np.asarray(spec.effect, dtype=float), (spec.T - spec.T0,))
    units = ["u00"] + [f"u{i:02d}" for i in range(1, n)]
    times = list(range(spec.start, spec.start + spec.T))
    panel = Panel(units, times, y, "u00", spec.T0)
    return SimulatedPanel(panel, y0, F, L, eta)


def simulate_panel(spec: FactorDgpSpec) -> Panel:
    return simulate(spec).panel


def simplex_grid(J: int, step: float) -> np.ndarray:
    """All points of the simplex in R^J with coordinates on a ``step`` grid."""
    n = round(1.0 / step)
    if abs(n * step - 1.0) > 1e-12:
        raise ConfigError("1/step must be an integer")
    # stars and bars: choose J-1 bar positions among n+J-1 slots
    bars = np.array(list(combinations(range(n + J - 1), J - 1)), dtype=np.int64)
    if J == 1:
        return np.ones((1, 1))
    edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), n + J - 1)])
    return (np.diff(edges, axis=1) - 1) / n


def brute_force_qp(H, c, step: float = 0.01, const: float = 0.0):
    """Grid minimiser of ``w'Hw + 2c'w + const`` (the grid objective, not halved)."""
    H = np.asarray(H, dtype=float)
    J = H.shape[0]
    if J > 4:
        raise DonorPoolTooLarge(f"grid search limited to 4 donors, got {J}")
    W = simplex_grid(J, step)
    vals = np.einsum("ij,jk,ik->i", W, H, W) + 2 * W @ np.asarray(c) + const
    i = int(np.argmin(vals))
    return W[i], float(vals[i])


def brute_force_weights(pred: PredictorSet, v, step: float = 0.01) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    X0 = pred.x_donors
    H = X0.T @ (v[:, None] * X0)
    c = -X0.T @ (v * pred.x_treated)
    const = float(pred.x_treated @ (v * pred.x_treated))
    w, _ = brute_force_qp(H, c, step, const)
    return w
