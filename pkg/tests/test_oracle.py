import numpy as np
import pytest

from counterfact.errors import DonorPoolTooLarge
from counterfact.oracle import (
    FactorDgpSpec,
    brute_force_qp,
    brute_force_weights,
    simplex_grid,
    simulate,
    simulate_panel,
)
from counterfact.panel import write_csv
from counterfact.scm import PredictorSet, objective, solve_weights


def test_grid_is_simplex():
    g = simplex_grid(3, 0.1)
    assert len(g) == 66
    assert np.allclose(g.sum(axis=1), 1) and np.all(g >= 0)


def test_noiseless_no_factors_identical_series():
    p = simulate_panel(FactorDgpSpec(J=4, r=0, noise_sigma=0.0))
    assert np.allclose(p.outcomes, p.outcomes[0])


def test_effect_enters_treated_post_only():
    base = simulate(FactorDgpSpec(J=5, noise_sigma=0.0, seed=3))
    shifted = simulate(FactorDgpSpec(J=5, noise_sigma=0.0, seed=3, effect=1.0))
    diff = shifted.panel.outcomes - base.panel.outcomes
    assert np.allclose(diff[0, 19:], 1.0)
    diff[0, 19:] = 0
    assert np.all(diff == 0)
    assert np.array_equal(shifted.untreated, base.untreated)


def test_fixture_csv_byte_identical(tmp_path):
    spec = FactorDgpSpec(J=10, T=30, T0=19, r=2, noise_sigma=0.05, seed=7)
    write_csv(simulate_panel(spec), tmp_path / "a.csv")
    write_csv(simulate_panel(spec), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def _pred(x1, X0):
    X0 = np.asarray(X0, float)
    return PredictorSet(np.asarray(x1, float), X0, tuple(map(str, range(len(x1)))), tuple(range(len(x1))))


def test_duplicate_donor_gets_all_weight():
    rng = np.random.default_rng(0)
    X0 = rng.normal(size=(5, 3))
    pred = _pred(X0[:, 1], X0)
    w = brute_force_weights(pred, np.ones(5))
    assert np.allclose(w, [0, 1, 0])
    assert objective(pred, np.ones(5), w) == pytest.approx(0, abs=1e-12)


def test_midpoint_symmetry():
    X0 = np.array([[0.0, 2.0], [1.0, 3.0]])
    w = brute_force_weights(_pred([1.0, 2.0], X0), np.ones(2))
    assert np.allclose(w, [0.5, 0.5])


def test_too_large():
    with pytest.raises(DonorPoolTooLarge):
        brute_force_qp(np.eye(5), np.zeros(5))


def test_grid_gap_small():
    # the grid optimum is never better than the continuous one and not much worse
    rng = np.random.default_rng(1)
    for _ in range(20):
        X0 = rng.normal(size=(4, 3))
        X0 /= np.abs(X0).max()
        pred = _pred(rng.normal(size=4) * 0.5, X0)
        v = np.full(4, 0.25)
        cont = objective(pred, v, solve_weights(pred, v))
        grid = objective(pred, v, brute_force_weights(pred, v, 0.01))
        assert cont <= grid + 1e-12
        assert grid - cont < 1e-3
