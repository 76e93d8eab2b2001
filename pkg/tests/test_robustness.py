import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from counterfact import robustness as rob
from counterfact import scm
from counterfact.errors import (
    EmptyDonorPool,
    InsufficientObservations,
    SingularDesign,
    TooFewDonorsForLevel,
    UnknownUnit,
)
from counterfact.panel import Panel

from conftest import UNIFORM


def test_loo_drops_weighted_donors(sim_panel):
    base = scm.fit(sim_panel, UNIFORM)
    res = rob.leave_one_out(sim_panel, UNIFORM, baseline=base)
    assert tuple(res) == base.nonzero_donors()
    for u, f in res.items():
        assert u not in f.donors


def test_loo_zero_weight_donor_is_noop(sim_panel):
    base = scm.fit(sim_panel, UNIFORM)
    zero = [u for u in sim_panel.donors if base.weight_of(u) == 0]
    if not zero:
        pytest.skip("every donor carries weight")
    f = rob.leave_one_out(sim_panel, UNIFORM, units=zero[:1])[zero[0]]
    assert np.allclose(f.synthetic, base.synthetic, atol=1e-7)


def test_loo_errors(toy_panel):
    with pytest.raises(UnknownUnit):
        rob.leave_one_out(toy_panel, UNIFORM, units=["ZZ"])
    with pytest.raises(EmptyDonorPool):
        rob.leave_one_out(toy_panel.subset_units(["T", "A"]), UNIFORM)


def test_diff_trend_detects_break():
    rng = np.random.default_rng(0)
    g = rng.normal(0, 0.1, 30)
    g[19:] += 1.0
    res = rob.diff_trend_test(g, 19)
    assert res.chi2 > 20 and res.p_value < 1e-4 and res.df == 1


def test_diff_trend_trend_option():
    rng = np.random.default_rng(1)
    g = rng.normal(0, 0.1, 30)
    res = rob.diff_trend_test(g, 19, trend=True, lag_form="level")
    assert res.df == 2 and 0 <= res.p_value <= 1


def test_diff_trend_no_break_coefficient():
    # white noise without a level shift
    rng = np.random.default_rng(3)
    g = rng.normal(0, 1, 30)
    res = rob.diff_trend_test(g, 19, cov="HC0")
    assert set(res.coefficients) == {"const", "post", "dgap_lag1", "dgap_lag2"}
    assert 0 <= res.p_value <= 1


def test_diff_trend_short_series():
    with pytest.raises(InsufficientObservations):
        rob.diff_trend_test(np.arange(10.0), 8)


def test_diff_trend_singular():
    with pytest.raises(SingularDesign):
        # a straight line makes the differenced lags constant
        rob.diff_trend_test(np.arange(30.0), 19)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_diff_trend_scale_invariant(seed, factor):
    g = np.random.default_rng(seed).normal(size=30)
    a = rob.diff_trend_test(g, 19)
    b = rob.diff_trend_test(g * factor, 19)
    assert b.chi2 == pytest.approx(a.chi2, rel=1e-7)


def test_sparsity_ci(sim_panel):
    base = scm.fit(sim_panel, UNIFORM)
    if len(base.nonzero_donors()) < 2:
        pytest.skip("sparse pool too small")
    try:
        ci = rob.sparsity_ci(sim_panel, base, level=0.9, config=UNIFORM)
    except TooFewDonorsForLevel:
        pytest.skip("not enough placebo gaps for this level")
    assert ci.times == base.post_times
    assert np.all(ci.lo <= ci.gap) and np.all(ci.gap <= ci.hi)
    assert np.allclose(ci.hi - ci.gap, ci.gap - ci.lo)


def test_sparsity_ci_single_donor():
    y = np.random.default_rng(0).uniform(1, 2, (3, 10))
    y[1] = y[0]
    p = Panel(["T", "A", "B"], range(10), y, "T", 6)
    base = scm.fit(p, UNIFORM)
    with pytest.raises(TooFewDonorsForLevel):
        rob.sparsity_ci(p, base, config=UNIFORM)


def test_sparsity_ci_level_too_high(sim_panel):
    base = scm.fit(sim_panel, UNIFORM)
    if len(base.nonzero_donors()) < 2:
        pytest.skip("sparse pool too small")
    with pytest.raises(TooFewDonorsForLevel):
        rob.sparsity_ci(sim_panel, base, level=0.9999, config=UNIFORM)
