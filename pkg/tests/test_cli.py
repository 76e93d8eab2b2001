import json

import numpy as np
import pytest

from counterfact import cli
from counterfact.oracle import FactorDgpSpec, simulate_panel

from conftest import write_long

FAST = ["--restarts", "2", "--max-evals", "10", "--n-boot", "20"]


@pytest.fixture
def data(tmp_path):
    p = simulate_panel(FactorDgpSpec(J=8, T=20, T0=12, r=1, noise_sigma=0.1, effect=1.0, seed=3))
    y = p.outcomes
    births = np.full_like(y, 90_000.0)
    units = ["GRC", "CYP", "ESP", "MLT", "FRA", "AUT", "BEL", "DNK", "FIN"]
    return write_long(tmp_path / "panel.csv", units, range(2001, 2021),
                      {"imr_total": y, "imr_boys": y * 1.1, "imr_girls": y * 0.9, "live_births": births})


def _run(argv):
    return cli.main([str(a) for a in argv])


def _base(data, out):
    return ["--data", data, "--treated", "GRC", "--t0", 2013, "--out", out]


@pytest.mark.parametrize("method", ["scm", "gsc", "sdid", "lasso"])
def test_run_methods_deterministic(data, tmp_path, method):
    outs = []
    for k in range(2):
        out = tmp_path / f"{method}{k}"
        assert _run(["run", *_base(data, out), "--outcome", "imr_total", "--method", method, *FAST]) == 0
        outs.append(out)
    files = sorted(f.name for f in outs[0].iterdir())
    assert "report.json" in files
    for name in files:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    report = json.loads((outs[0] / "report.json").read_text())
    assert report["method"] == method and report["status"] == "ok"
    assert report["provenance"]["version"]
    assert abs(report["att"] - 1.0) < 0.5


def test_run_scm_extras(data, tmp_path):
    out = tmp_path / "o"
    rc = _run(["run", *_base(data, out), "--outcome", "imr_total", "--placebo", "space", "--loo",
               "--diff-trend", "--births-column", "live_births", *FAST])
    assert rc == 0
    for name in ("gaps.csv", "weights.csv", "placebo_gaps.csv", "rmse_ratios.csv", "pvalues.csv",
                 "loo_summary.csv"):
        assert (out / name).exists()
    report = json.loads((out / "report.json").read_text())
    assert report["deaths"]["mean_per_year"] == pytest.approx(report["att"] * 90, rel=1e-9)
    assert "chi2" in report["diff_trend"]
    header = (out / "gaps.csv").read_text().splitlines()[0]
    assert header == "time,actual,synthetic,gap"


def test_time_placebo(data, tmp_path):
    out = tmp_path / "o"
    rc = _run(["run", *_base(data, out), "--outcome", "imr_total", "--placebo", "time",
               "--fake-t0", 2007, *FAST])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["placebo_time"]["fake_t0"] == 2007
    assert max(map(int, report["fit"]["effects"])) == 2012


def test_config_file_and_flag_precedence(data, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"data = {data}\noutcome = imr_total\ntreated = GRC\nt0 = 2013\n"
                   "method = sdid  # comment\nseed = 5\n")
    out = tmp_path / "o"
    assert _run(["run", "--config", cfg, "--out", out, "--method", "lasso", "--lambda", "0.1"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["method"] == "lasso"
    assert report["provenance"]["config"]["seed"] == 5
    assert report["fit"]["lam"] == 0.1


def test_env_seed(data, tmp_path, monkeypatch):
    monkeypatch.setenv("COUNTERFACT_SEED", "9")
    out = tmp_path / "o"
    assert _run(["run", *_base(data, out), "--outcome", "imr_total", "--method", "sdid"]) == 0
    assert json.loads((out / "report.json").read_text())["provenance"]["config"]["seed"] == 9
    out2 = tmp_path / "o2"
    assert _run(["run", *_base(data, out2), "--outcome", "imr_total", "--method", "sdid", "--seed", 1]) == 0
    assert json.loads((out2 / "report.json").read_text())["provenance"]["config"]["seed"] == 1


@pytest.mark.parametrize("argv, status, code", [
    (["--treated", "XXX"], 3, "unknown_unit"),
    (["--t0", 2030], 3, "t0_out_of_range"),
    (["--placebo", "time"], 2, "config_error"),
    (["--donors", ""], 2, None),
])
def test_exit_codes(data, tmp_path, capsys, argv, status, code):
    out = tmp_path / "o"
    base = ["run", "--data", data, "--outcome", "imr_total", "--treated", "GRC", "--t0", 2013,
            "--out", out]
    rc = _run(base + argv)
    if argv == ["--donors", ""]:
        # an empty keep-list means "all donors"
        assert rc == 0
        return
    assert rc == status
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["code"] == code and record["status"] == "error"
    assert json.loads((out / "error.json").read_text()) == record


def test_missing_data_file(tmp_path):
    rc = _run(["run", "--data", tmp_path / "nope.csv", "--outcome", "y", "--treated", "A",
               "--t0", 2000, "--out", tmp_path / "o"])
    assert rc in (2, 3)


def test_replicate(data, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert _run(["replicate", *_base(data, out), *FAST, "--fake-t0", 2007]) == 0
        outs.append(out)
    a = (outs[0] / "report.json").read_bytes()
    assert a == (outs[1] / "report.json").read_bytes()
    cells = json.loads(a)["cells"]
    for key in ("scm/imr_total", "scm/imr_boys", "gsc/imr_girls", "sdid/imr_total",
                "lasso/imr_total", "placebo_space/imr_total", "diff_trend/imr_boys",
                "mediterranean/imr_total", "loo/imr_total"):
        assert key in cells and "status" in cells[key]
    assert cells["mediterranean/imr_total"]["donors"] == ["CYP", "FRA", "MLT", "ESP"]


def test_simulate(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(["simulate", "--out", a, "--seed", 7]) == 0
    assert _run(["simulate", "--out", b, "--seed", 7]) == 0
    assert a.read_bytes() == b.read_bytes()
