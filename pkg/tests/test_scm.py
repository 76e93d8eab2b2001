import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from counterfact import scm
from counterfact.errors import ConfigError, InsufficientPrePeriods, NegativeBirths
from counterfact.oracle import FactorDgpSpec, brute_force_weights, simulate_panel
from counterfact.panel import Panel

from conftest import FAST, UNIFORM


def test_perfect_match():
    rng = np.random.default_rng(0)
    y = rng.uniform(5, 10, (5, 20))
    y[3] = y[0]
    p = Panel(["T", "A", "B", "C", "D"], range(20), y, "T", 12)
    f = scm.fit(p, FAST)
    assert f.pre_rmse <= 1e-8
    assert f.weight_of("C") >= 0.999


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 4), st.integers(2, 6))
def test_weights_match_grid_oracle(seed, J, k):
    rng = np.random.default_rng(seed)
    pred = scm.PredictorSet(rng.normal(size=k), rng.normal(size=(k, J)),
                            tuple(map(str, range(k))), tuple(range(k)))
    v = scm.normalize_v(rng.uniform(0.1, 1, k))
    w = scm.solve_weights(pred, v)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
    assert scm.objective(pred, v, w) <= scm.objective(pred, v, brute_force_weights(pred, v)) + 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 50))
def test_scale_invariance(seed, factor):
    p = simulate_panel(FactorDgpSpec(J=6, T=14, T0=9, seed=seed))
    a = scm.fit(p, UNIFORM)
    b = scm.fit(p.scaled(factor), UNIFORM)
    assert np.allclose(a.weights, b.weights, atol=1e-6)
    assert b.att == pytest.approx(factor * a.att, rel=1e-6, abs=1e-9)


def test_donor_order_invariance(sim_panel):
    a = scm.fit(sim_panel, UNIFORM)
    order = [sim_panel.treated] + list(reversed(sim_panel.donors))
    b = scm.fit(sim_panel.subset_units(order), UNIFORM)
    for u in sim_panel.donors:
        assert a.weight_of(u) == pytest.approx(b.weight_of(u), abs=1e-8)


def test_optimized_v(sim_panel):
    f = scm.fit(sim_panel, FAST)
    assert f.v.shape == (19,) and abs(f.v.sum() - 1) < 1e-12 and np.all(f.v >= 0)
    assert f.cv_mspe is not None and f.cv_mspe >= 0
    assert f.pre_rmse < 0.2
    again = scm.fit(sim_panel, FAST)
    assert np.array_equal(f.weights, again.weights) and np.array_equal(f.v, again.v)


def test_fixed_v_and_errors(sim_panel):
    v = np.ones(19)
    f = scm.fit(sim_panel, scm.ScmConfig(v_mode="fixed", v=v))
    g = scm.fit(sim_panel, UNIFORM)
    assert np.allclose(f.weights, g.weights)
    with pytest.raises(ConfigError):
        scm.fit(sim_panel, scm.ScmConfig(v_mode="fixed", v=np.ones(3)))
    with pytest.raises(ConfigError):
        scm.ScmConfig(v_mode="nope")
    with pytest.raises(ConfigError):
        scm.normalize_v([0.0, 0.0])


def test_too_few_pre_periods_for_v_search():
    y = np.random.default_rng(0).uniform(1, 2, (4, 6))
    p = Panel(["T", "A", "B", "C"], range(6), y, "T", 3)
    with pytest.raises(InsufficientPrePeriods):
        scm.fit(p, FAST)
    assert scm.fit(p, UNIFORM).weights.shape == (3,)


def test_covariate_rows(sim_panel):
    cov = {"z": {u: float(i) for i, u in enumerate(sim_panel.units)}}
    pred = scm.build_predictors(sim_panel, cov)
    assert pred.k == 20 and pred.periods[-1] is None
    f = scm.fit(sim_panel, scm.ScmConfig(restarts=2, max_evals=20, covariates=cov))
    assert f.predictor_labels[-1] == "z"


def test_series_accessors(toy_panel):
    f = scm.fit(toy_panel, UNIFORM)
    assert f.post_times == (2003,)
    assert np.allclose(f.gaps, f.actual - f.synthetic)
    assert f.att == pytest.approx(f.effects.mean())
    assert f.rmse_ratio == pytest.approx(f.post_rmse / f.pre_rmse)


def test_gap_to_deaths():
    assert scm.gap_to_deaths(0.85, 85_000) == pytest.approx(72.25)
    assert np.allclose(scm.gap_to_deaths([1.0, 2.0], [1000, 500]), [1.0, 1.0])
    with pytest.raises(NegativeBirths):
        scm.gap_to_deaths(1.0, -1)
