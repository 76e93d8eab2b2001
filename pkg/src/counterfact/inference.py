"""Permutation inference for a single treated unit.

In-space placebos reassign the intervention to every donor in turn; the
treated unit's per-period effect is then ranked against the placebo effects
of units whose pre-period fit is comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from ._parallel import pmap
from .errors import (
    AllPlacebosFailed,
    CounterfactError,
    EmptyDonorPool,
    NoSurvivingPlacebos,
    T0OutOfRange,
)
from .panel import Panel
from .scm import ScmConfig, ScmFit, fit


@dataclass(frozen=True, eq=False)
class PlaceboDistribution:
    treated: str
    treated_fit: ScmFit
    fits: dict[str, ScmFit]
    failures: dict[str, str] = field(default_factory=dict)
    multiplier: float = math.inf
    one_sided: bool = False
    kept: tuple[str, ...] = ()
    p_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def post_times(self) -> tuple[int, ...]:
        return self.treated_fit.post_times

    @property
    def rmse_ratios(self) -> dict[str, float]:
        out = {self.treated: self.treated_fit.rmse_ratio}
        out.update((u, f.rmse_ratio) for u, f in self.fits.items())
        return out

    @property
    def ratio_rank_p(self) -> float:
        """Share of all units (treated included) with a ratio >= the treated one."""
        ratios = self.rmse_ratios
        mine = ratios[self.treated]
        return sum(r >= mine for r in ratios.values()) / len(ratios)

    @property
    def treated_has_max_ratio(self) -> bool:
        ratios = self.rmse_ratios
        mine = ratios.pop(self.treated)
        return all(mine > r for r in ratios.values())


def _p_values(treated_fit: ScmFit, placebo_fits, one_sided: bool) -> np.ndarray:
    if not placebo_fits:
        return np.full(len(treated_fit.effects), np.nan)
    mine = treated_fit.effects
    others = np.array([f.effects for f in placebo_fits])
    if one_sided:
        hits = others >= mine
    else:
        hits = np.abs(others) >= np.abs(mine)
    return hits.sum(axis=0) / len(placebo_fits)


def _placebo_fit(unit: str, panel: Panel, config: ScmConfig):
    try:
        return unit, fit(panel.as_treated(unit, exclude=[panel.treated]), config), None
    except CounterfactError as exc:
        return unit, None, f"{exc.code}: {exc}"


def in_space_placebos(panel: Panel, config: ScmConfig | None = None, jobs: int = 1,
                      one_sided: bool = False, treated_fit: ScmFit | None = None
                      ) -> PlaceboDistribution:
    """Refit with every donor as the pseudo-treated unit (no MSPE filter).

    The real treated unit is left out of each placebo's donor pool. Failed
    placebo fits are recorded in ``failures``.
    """
    config = config or ScmConfig()
    if panel.n_donors < 2:
        raise EmptyDonorPool("placebo runs need at least two donors")
    treated_fit = treated_fit or fit(panel, config)
    results = pmap(partial(_placebo_fit, panel=panel, config=config), panel.donors, jobs)
    fits = {u: f for u, f, _ in results if f is not None}
    failures = {u: e for u, _, e in results if e is not None}
    if not fits:
        raise AllPlacebosFailed("every placebo fit failed")
    kept = tuple(fits)
    return PlaceboDistribution(
        treated=panel.treated,
        treated_fit=treated_fit,
        fits=fits,
        failures=failures,
        one_sided=one_sided,
        kept=kept,
        p_values=_p_values(treated_fit, list(fits.values()), one_sided),
    )


def filter_mspe(dist: PlaceboDistribution, multiplier: float) -> PlaceboDistribution:
    """Drop placebos whose pre-period MSPE exceeds ``multiplier`` x the treated one."""
    if not multiplier > 0:
        raise ValueError("multiplier must be positive")
    cutoff = multiplier * dist.treated_fit.pre_mspe
    kept = tuple(u for u, f in dist.fits.items() if f.pre_mspe <= cutoff)
    if not kept:
        raise NoSurvivingPlacebos(
            f"no placebo has pre-period MSPE within {multiplier}x of the treated unit"
        )
    p = _p_values(dist.treated_fit, [dist.fits[u] for u in kept], dist.one_sided)
    return replace(dist, multiplier=float(multiplier), kept=kept, p_values=p)


def in_time_placebo(panel: Panel, fake_t0: int, config: ScmConfig | None = None) -> ScmFit:
    """Backdate the intervention to ``fake_t0`` using only true pre-period data."""
    fake_idx = panel.index_of_time(fake_t0)
    if fake_idx < 2 or panel.t0_index - fake_idx < 2:
        raise T0OutOfRange(
            f"placebo date {fake_t0} needs >= 2 periods on each side inside the pre-period"
        )
    pre_only = panel.truncate(panel.t0_index, t0_index=fake_idx)
    return fit(pre_only, config)
